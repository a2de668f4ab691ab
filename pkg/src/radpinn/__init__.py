"""Physics-informed networks for boundary-layer reaction-advection-diffusion problems."""
