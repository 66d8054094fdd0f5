"""Dense tensors with tape-based reverse-mode autodiff."""
