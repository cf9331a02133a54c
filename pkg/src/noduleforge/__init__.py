"""noduleforge: DC-GAN lung-nodule generation with a blinded rating study."""

__version__ = "0.1.0"
