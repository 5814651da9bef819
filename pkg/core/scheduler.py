"""
任务调度器 - 有界并发执行独立任务，按提交顺序返回结果
"""
import logging
import os
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

logger = logging.getLogger(__name__)


def default_workers() -> int:
    return os.cpu_count() or 1


@dataclass
class TaskContext:
    """任务执行上下文"""
    task_id: str
    name: str
    fn: Callable[..., Any]
    args: Tuple[Any, ...] = ()
    kwargs: Dict[str, Any] = field(default_factory=dict)
    timestamp: datetime = field(default_factory=datetime.now)


class TaskScheduler:
    """任务调度器 - 管理独立任务的并发执行

    结果总是按提交顺序合并，与线程数无关。
    """

    def __init__(self, max_workers: Optional[int] = None):
        self.max_workers = max(1, int(max_workers or default_workers()))
        self.execution_queue: List[TaskContext] = []
        self.execution_history: List[TaskContext] = []

    def add_to_schedule(self, fn: Callable[..., Any], *args, name: str = "", **kwargs) -> str:
        """添加任务到调度队列"""
        task_id = str(uuid.uuid4())[:8]
        self.execution_queue.append(
            TaskContext(task_id=task_id, name=name or getattr(fn, "__name__", "task"),
                        fn=fn, args=args, kwargs=kwargs)
        )
        return task_id

    def execute_scheduled(self) -> List[Any]:
        """执行所有调度的任务"""
        queue, self.execution_queue = self.execution_queue, []
        if not queue:
            return []
        logger.debug(f"executing {len(queue)} tasks with {self.max_workers} workers")
        if self.max_workers == 1 or len(queue) == 1:
            results = [ctx.fn(*ctx.args, **ctx.kwargs) for ctx in queue]
        else:
            with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
                futures = [pool.submit(ctx.fn, *ctx.args, **ctx.kwargs) for ctx in queue]
                results = [f.result() for f in futures]
        self.execution_history.extend(queue)
        return results

    def map(self, fn: Callable[[Any], Any], items: Iterable[Any]) -> List[Any]:
        """对每个元素调度一次 fn，按输入顺序返回"""
        for item in items:
            self.add_to_schedule(fn, item)
        return self.execute_scheduled()

    def clear(self) -> None:
        """清空调度队列"""
        self.execution_queue.clear()


def chunked(items: Sequence[Any], size: int) -> List[Sequence[Any]]:
    """固定大小分块，分块方式与线程数无关"""
    size = max(1, int(size))
    return [items[i:i + size] for i in range(0, len(items), size)]


def resolve_scheduler(scheduler: Optional[TaskScheduler]) -> TaskScheduler:
    return scheduler if scheduler is not None else TaskScheduler(1)
