# Horseshoe init - Itinerary certification and hitting density
from .certifier import (
    BallPair,
    CellCertificate,
    FlowOracle,
    ItineraryWord,
    TorusBall,
    brute_force_search,
    certify_full_horseshoe,
    realize_word,
    verify_certificate,
)
from .density import DensityReport, estimate_hitting_density, symbolic_entropy_lower_bound

__all__ = [
    'BallPair', 'CellCertificate', 'FlowOracle', 'ItineraryWord', 'TorusBall',
    'brute_force_search', 'certify_full_horseshoe', 'realize_word', 'verify_certificate',
    'DensityReport', 'estimate_hitting_density', 'symbolic_entropy_lower_bound',
]
