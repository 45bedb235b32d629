"""Loss re-scaling and answer-mask experiments on synthetic changing-priors data."""

import json

try:
    from . import _lpr
except ImportError:  # in-tree build: the extension sits next to the package
    import _lpr

InputError = _lpr.InputError
NumericError = _lpr.NumericError

raw_weight = _lpr.raw_weight
smooth_weight = _lpr.smooth_weight
weight_table = _lpr.weight_table
sigm_bce = _lpr.sigm_bce
soft_ce = _lpr.soft_ce
focal = _lpr.focal
softplus_g = _lpr.softplus_g
mask_loss = _lpr.mask_loss
vqa_accuracy = _lpr.vqa_accuracy
cohens_kappa = _lpr.cohens_kappa
cli = _lpr.cli


def run_experiment(data=None, train=None):
    """Generate data, train and evaluate; configs are dicts of overrides."""
    return json.loads(_lpr.run_experiment(json.dumps(data or {}), json.dumps(train or {})))


__all__ = [
    "InputError", "NumericError", "raw_weight", "smooth_weight", "weight_table", "sigm_bce",
    "soft_ce", "focal", "softplus_g", "mask_loss", "vqa_accuracy", "cohens_kappa", "cli",
    "run_experiment",
]
