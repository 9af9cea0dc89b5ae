from .scenario import ScenarioConfig, ScenarioException, load_builtin, load_config  # noqa: F401
from .twin import DigitalTwin, simulate, min_bw_for_sla  # noqa: F401
from .memory import MemoryPolicy, MemoryStore, query_memory, record_episode  # noqa: F401
from .negotiation import run_negotiation  # noqa: F401
from .experiment import run_trials, run_sweep, summarize  # noqa: F401
from .main import main  # noqa: F401
from .version import VERSION  # noqa: F401
