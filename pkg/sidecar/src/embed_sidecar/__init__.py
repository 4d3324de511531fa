"""HTTP sidecar serving text/image embeddings, fill-mask, completion and
POS tagging behind the generation toolkit's wire contracts."""

from .app import SidecarConfig, create_app

__all__ = ["SidecarConfig", "create_app"]
__version__ = "0.1.0"
