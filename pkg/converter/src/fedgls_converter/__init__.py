"""Dataset converters emitting the fedgls TSV format."""

from .convert import ConversionManifest, DATASETS, EXPECTED, SourceError, convert

__version__ = "0.1.0"
