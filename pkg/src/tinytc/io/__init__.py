"""Model files and report rendering."""

from tinytc.io.model_file import decode_model, encode_model, load_model, save_model
from tinytc.io.reports import emit_cost_report, parse_cost_csv, read_genome, write_genome

__all__ = ["decode_model", "emit_cost_report", "encode_model", "load_model", "parse_cost_csv",
           "read_genome", "save_model", "write_genome"]
