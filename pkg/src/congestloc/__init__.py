"""Congestion localization for broadband access networks.

Recurrent-congestion metrics, correlation-based detection of tight initial
segments, per-ISP prevalence tables, and a measurement simulator with
planted bottlenecks for validating the detector.
"""

__version__ = "0.1.0"

from .metrics import (
    CANONICAL_RC,
    ExcludedMonth,
    RcParams,
    RcVerdict,
    TierChanged,
    TierEstimate,
    TierUndetermined,
    canonical_rc,
    infer_tier,
    recurrent_congestion,
    sustained_throughput,
)
from .model import (
    SITES,
    BenchmarkRun,
    Connection,
    ConnectionMonth,
    IngestError,
    Reject,
    Schema,
    Technology,
    WebsiteFetch,
    group_by_month,
    ingest_csv,
)
from .report import GroupBy, IspSummary, Metric, prevalence_series, summarize
from .tis import CorrMethod, DetectorParams, PairedSeries, TisVerdict, correlation, detect_tis, pair_measurements, website_speed

__all__ = [
    "CANONICAL_RC", "SITES", "BenchmarkRun", "Connection", "ConnectionMonth", "CorrMethod", "DetectorParams",
    "ExcludedMonth", "GroupBy", "IngestError", "IspSummary", "Metric", "PairedSeries", "RcParams", "RcVerdict",
    "Reject", "Schema", "Technology", "TierChanged", "TierEstimate", "TierUndetermined", "TisVerdict",
    "WebsiteFetch", "canonical_rc", "correlation", "detect_tis", "group_by_month", "infer_tier", "ingest_csv",
    "pair_measurements", "prevalence_series", "recurrent_congestion", "summarize", "sustained_throughput",
    "website_speed",
]
