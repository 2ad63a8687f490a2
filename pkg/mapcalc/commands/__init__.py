"""
Command modules. Importing this package registers every command in
``COMMANDS``.
"""

from . import flow, geometry, liouville, soliton, stress, variation  # noqa: F401
from .base import COMMANDS, CommandResult, Experiment, command

__all__ = ["COMMANDS", "CommandResult", "Experiment", "command"]
