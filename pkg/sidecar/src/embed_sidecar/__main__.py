"""Run the sidecar with uvicorn; configuration comes from the environment.

SIDECAR_HOST (default 127.0.0.1), SIDECAR_PORT (default 8099),
SIDECAR_DIM (default 256), and one SIDECAR_<ENDPOINT>_MODEL variable per
endpoint (TEXT, IMAGE, UNMASK, COMPLETE, TAG); the value ``off`` disables
the endpoint.
"""

from __future__ import annotations

import os

import uvicorn

from .app import SidecarConfig, create_app


def config_from_env() -> SidecarConfig:
    base = SidecarConfig()
    return SidecarConfig(
        dim=int(os.environ.get("SIDECAR_DIM", base.dim)),
        text_model=os.environ.get("SIDECAR_TEXT_MODEL", base.text_model),
        image_model=os.environ.get("SIDECAR_IMAGE_MODEL", base.image_model),
        unmask_model=os.environ.get("SIDECAR_UNMASK_MODEL", base.unmask_model),
        complete_model=os.environ.get("SIDECAR_COMPLETE_MODEL", base.complete_model),
        tag_model=os.environ.get("SIDECAR_TAG_MODEL", base.tag_model),
    )


def main() -> None:
    host = os.environ.get("SIDECAR_HOST", "127.0.0.1")
    port = int(os.environ.get("SIDECAR_PORT", "8099"))
    uvicorn.run(create_app(config_from_env()), host=host, port=port)


if __name__ == "__main__":
    main()
