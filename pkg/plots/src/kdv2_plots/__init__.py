"""Figure generation for kdv2 run directories, via artifact files only."""

from .render import (
    FigureSpec,
    KINDS,
    MalformedArtifact,
    MissingArtifact,
    least_squares_slope,
    main,
    read_snapshot,
    render,
)

__all__ = [
    "FigureSpec",
    "KINDS",
    "MalformedArtifact",
    "MissingArtifact",
    "least_squares_slope",
    "main",
    "read_snapshot",
    "render",
]
