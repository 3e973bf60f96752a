"""Block Lanczos transfer functions with Krein-Nudelman square-root terminators."""
