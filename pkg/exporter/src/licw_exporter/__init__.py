"""licw-exporter: turn trained coder checkpoints into LICW weight files."""

from .export import ExportError, ExportManifest, export, load_state_dict
from .models import SUPPORTED, UNSUPPORTED, declared_architecture, resolve_nonneg
from .toy import make_toy

__version__ = "0.1.0"
