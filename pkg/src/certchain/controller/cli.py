"""``certchain-server``: run the controller HTTP service."""

from __future__ import annotations

import sys
from pathlib import Path

import click
import uvicorn

from .api import create_app
from .config import ControllerConfig
from .service import ControllerService


@click.command()
@click.option("--config", "config_path", type=click.Path(exists=True), required=True,
              help="JSON config file mirroring ControllerConfig.")
@click.option("--data-dir", type=click.Path(), required=True,
              help="Directory for the chain log, registry journal, and keys.")
@click.option("--host", default=None, help="Override configured bind host.")
@click.option("--port", default=None, type=int, help="Override configured port.")
def main(config_path, data_dir, host, port):
    try:
        config = ControllerConfig.from_file(Path(config_path))
    except (ValueError, TypeError, KeyError) as exc:
        click.echo(f"bad config: {exc}", err=True)
        sys.exit(2)
    service = ControllerService.create(config, Path(data_dir))
    service.start()
    try:
        uvicorn.run(
            create_app(service),
            host=host or config.host,
            port=port or config.port,
            log_level="warning",
        )
    finally:
        service.stop()


if __name__ == "__main__":
    main()
