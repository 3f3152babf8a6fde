import sys
from typing import Optional

import typer
from loguru import logger

from wplus.core.settings import settings
from wplus.modules.embedder.embedder_commands import embedder_app
from wplus.modules.generator.generator_commands import generator_app
from wplus.modules.latentops.latentops_commands import latentops_app
from wplus.modules.perceptual.perceptual_commands import perceptual_app
from wplus.modules.stresslab.stresslab_commands import stresslab_app
from wplus.utils.seeding import configure_determinism

app = typer.Typer(name=settings.APP_NAME, help=settings.APP_DESCRIPTION, no_args_is_help=True)


@app.callback()
def main(
    log_level: Optional[str] = typer.Option(None, "--log-level", help="loguru level [default: WPLUS_LOG_LEVEL]"),
    deterministic: Optional[bool] = typer.Option(
        None, "--deterministic/--no-deterministic", help="[default: WPLUS_DETERMINISTIC]"
    ),
):
    logger.remove()
    logger.add(sys.stderr, level=(log_level or settings.LOG_LEVEL).upper())
    configure_determinism(deterministic)


app.add_typer(generator_app)
app.add_typer(perceptual_app)
app.add_typer(embedder_app)
app.add_typer(latentops_app)
app.add_typer(stresslab_app, name="stress")


@app.command("version")
def version():
    typer.echo(f"{settings.APP_NAME} {settings.APP_VERSION}")


def run():
    app()


if __name__ == "__main__":
    run()
