from .config import RunConfig, build_config, read_config_file
from .dictionary import DictEntry, Dictionary, Measurement, FitResult
from .dictionary import build_dictionary, classify, fit_position, fit_scale, planted_measurement, rotation_grid
from .verify import VerifySuite
from .plotutils import PlotUtils
