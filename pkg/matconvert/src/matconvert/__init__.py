from .convert import (ArchiveMap, ConversionReport, ConvertError, MapEntry,
                      convert_archive, load_builtin_map, read_channel)

__all__ = ["ArchiveMap", "ConversionReport", "ConvertError", "MapEntry",
           "convert_archive", "load_builtin_map", "read_channel"]
__version__ = "0.1.0"
