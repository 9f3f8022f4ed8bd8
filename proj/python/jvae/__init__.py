"""Joint latent-variable trajectory forecasting on synthetic ego/pedestrian scenes."""

try:
    from ._jvae import *  # noqa: F401,F403
    from ._jvae import __doc__  # noqa: F401
except ImportError:  # build tree: the extension sits next to the package, not inside it
    from _jvae import *  # noqa: F401,F403
