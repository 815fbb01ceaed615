"""Rolling correlation-matrix analytics for price-index panels."""

from .ingest import (
    CsvSchema,
    ParseError,
    PricePanel,
    Quarter,
    ReturnPanel,
    WindowSpec,
    load_schema,
    log_returns,
    national_return_series,
    parse_price_csv,
    windows,
    write_price_csv,
)
from .corrlab import (
    CorrelationMatrix,
    PartialCorrelationMatrix,
    corr_critical_value,
    matrix_record,
    matrix_to_csv,
    mean_correlation,
    partial_correlation_matrix,
    pearson_matrix,
)
from .spectra import (
    ClusterSampledAbsorption,
    DeviatingEigenvalues,
    MPBounds,
    NullSpectrum,
    SpectralDecomposition,
    absorption_ratio,
    cluster_sampled_absorption,
    deviating_eigenvalues,
    eigendecompose,
    mp_bounds,
    mp_density,
    negative_component_weight,
    null_spectrum,
)
from .market_effect import (
    MarketEffectSeries,
    RegimeShift,
    RegimeTimeline,
    detect_regime_shifts,
    eigenportfolio_returns,
    market_effect_series,
    ols_coefficient,
    robust_coefficient,
)
from .seriation import (
    AnnealSchedule,
    Ordering,
    anneal_order,
    brute_force_order,
    seriation_cost,
)
from .clustering import (
    SYMBOLS,
    AffinityMatrix,
    ClusterAttribution,
    Partition,
    assign_symbols,
    component_matrix,
    consensus_partition,
    greedy_box_partition,
    information_ratio,
    modularity,
)
from .tracking import (
    ColorConfiguration,
    color_timeline,
    configuration_similarity,
)
from .synth import FactorModelSpec, generate_factor_panel
from .pipeline import RunConfig, run_pipeline, write_report

__version__ = "0.1.0"
