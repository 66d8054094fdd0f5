"""Real and Hermitian discrete Fourier transforms."""
