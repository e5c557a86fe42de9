"""Joint image compression and denoising with a scalable learned latent space.

The quantized latent of a learned autoencoder is split by channel into a base
layer, which decodes to a denoised image, and an enhancement layer that,
together with the base layer, reconstructs the noisy input.
"""

__version__ = "0.1.0"
