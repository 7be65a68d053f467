"""Change-detection mechanisms: Gaussian noise domain disturbance, detail
feature compensation, mutual-information difference loss and GAM attention,
on a small numpy autodiff core."""
__version__ = "0.1.0"
