"""Multi-head N-BEATS forecasting engine on a numpy autodiff core."""
