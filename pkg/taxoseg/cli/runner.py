"""
Bounded worker pool for per-file work items
"""
import asyncio
import logging
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable
from typing import Generic
from typing import Iterable
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple
from typing import TypeVar

from taxoseg._util import atomic_write
from taxoseg.constants import ERROR_LOG
from taxoseg.exceptions import TaxosegException
from taxoseg.signals import post_item_process
from taxoseg.signals import pre_item_process
from taxoseg.signals import send_safely

log = logging.getLogger(__name__)
log.addHandler(logging.NullHandler())

T = TypeVar('T')

# failures a single file can cause; anything else is a bug and propagates
ITEM_ERRORS = (TaxosegException, OSError)


@dataclass(frozen=True)
class ItemResult(Generic[T]):
    stem: str
    value: Optional[T] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


class WorkerPool(object):
    """
    Runs blocking per-file work items on a thread executor, at most `jobs` at a time.

    Results come back in submission order whatever order the items finish in.
    """

    def __init__(self, command: str, jobs: int) -> None:
        if jobs < 1:
            raise ValueError("jobs must be at least 1")
        self.command = command
        self.jobs = jobs

    async def _run_one(
        self,
        loop: asyncio.AbstractEventLoop,
        executor: ThreadPoolExecutor,
        semaphore: asyncio.Semaphore,
        stem: str,
        work: Callable[[], T],
    ) -> ItemResult[T]:
        async with semaphore:
            item_uuid = uuid.uuid4()
            send_safely(pre_item_process, self, command=self.command, stem=stem, item_uuid=item_uuid)
            result: ItemResult[T]
            try:
                value = await loop.run_in_executor(executor, work)
                result = ItemResult(stem=stem, value=value)
            except ITEM_ERRORS as e:
                log.error("%s: %s failed: %s", self.command, stem, e)
                result = ItemResult(stem=stem, error='{}: {}'.format(type(e).__name__, e))
            send_safely(post_item_process, self, command=self.command, stem=stem, item_uuid=item_uuid, ok=result.ok)
            return result

    async def run(self, items: Iterable[Tuple[str, Callable[[], T]]]) -> List[ItemResult[T]]:
        loop = asyncio.get_running_loop()
        semaphore = asyncio.Semaphore(self.jobs)
        with ThreadPoolExecutor(max_workers=self.jobs, thread_name_prefix='taxoseg-' + self.command) as executor:
            tasks = [self._run_one(loop, executor, semaphore, stem, work) for stem, work in items]
            log.debug("%s: running %d items on %d workers", self.command, len(tasks), self.jobs)
            return list(await asyncio.gather(*tasks))

    def run_sync(self, items: Iterable[Tuple[str, Callable[[], T]]]) -> List[ItemResult[T]]:
        return asyncio.run(self.run(items))


def write_error_log(out_dir: Path, failures: Sequence[Tuple[str, str]]) -> None:
    """
    Writes ``errors.log`` with one ``<stem>: <error>`` line per failure, sorted by stem.
    A clean run removes the log left by an earlier one.
    """
    path = out_dir / ERROR_LOG
    if not failures:
        if path.exists():
            path.unlink()
        return
    lines = ['{}: {}\n'.format(stem, error) for stem, error in sorted(failures)]
    atomic_write(path, ''.join(lines))
