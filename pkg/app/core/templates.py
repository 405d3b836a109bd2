"""
Shared Jinja2 templates (submission files)
"""

from jinja2 import Environment, FileSystemLoader, StrictUndefined

from app.config import settings

# Submission text is escaped before rendering, so autoescape stays off
env = Environment(
    loader=FileSystemLoader(str(settings.TEMPLATES_DIR)),
    autoescape=False,
    undefined=StrictUndefined,
    keep_trailing_newline=True,
)


def render(name: str, **context) -> str:
    """Render a shared template by file name."""
    return env.get_template(name).render(**context)
