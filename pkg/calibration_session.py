import datetime
import logging
from collections import OrderedDict

from noise_model import NoiseModel
from runner import RunResult

logger = logging.getLogger(__name__)


class CalibrationSession:
    """
    Holds one uploaded noise model and the runs executed against it.

    The session tracks its last access time so the service can expire idle
    models; every read or write through the API touches it. At most
    ``max_runs`` results are kept, the oldest stored run is dropped first.
    """
    def __init__(self, model: NoiseModel, max_runs: int = 50):
        if max_runs < 1:
            raise ValueError(f"max_runs must be positive, got {max_runs}")
        self.model = model
        self.max_runs = max_runs
        self.last_accessed: datetime.datetime = datetime.datetime.now()
        self.runs: OrderedDict[str, RunResult] = OrderedDict()

    def add_run(self, run_id: str, result: RunResult):
        """Stores a finished run under ``run_id``, evicting the oldest past the cap."""
        self.runs[run_id] = result
        self.runs.move_to_end(run_id)
        while len(self.runs) > self.max_runs:
            evicted, _ = self.runs.popitem(last=False)
            logger.info("Evicted run %s (session keeps %d runs)", evicted, self.max_runs)
        self.touch()

    def get_run(self, run_id: str) -> RunResult | None:
        """Retrieves a stored run."""
        return self.runs.get(run_id)

    def touch(self):
        """Updates the last_accessed timestamp to the current time."""
        self.last_accessed = datetime.datetime.now()
