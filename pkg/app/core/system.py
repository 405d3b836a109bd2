"""
Host information and component timing for run reports
"""

import logging
import os
import platform
import time
from contextlib import contextmanager
from typing import Dict, Iterator

import psutil

logger = logging.getLogger(__name__)


def get_os_info() -> str:
    """
    Returns operating system information
    Example: "Debian GNU/Linux 13 (bookworm)"
    """
    try:
        with open('/etc/os-release', 'r') as f:
            os_info = {}
            for line in f:
                if '=' in line:
                    key, value = line.strip().split('=', 1)
                    os_info[key] = value.strip('"')
            return os_info.get('PRETTY_NAME', f"{platform.system()} {platform.release()}")
    except Exception:
        return f"{platform.system()} {platform.release()}"


def get_cpu_info() -> str:
    """
    Returns CPU information
    Example: "Intel(R) Core(TM) i7-8650U (8 cores)"
    """
    cpu_count = os.cpu_count() or 1
    try:
        with open('/proc/cpuinfo', 'r') as f:
            for line in f:
                if ':' in line:
                    key, value = line.split(':', 1)
                    if key.strip() in ('model name', 'Model', 'Hardware'):
                        return f"{value.strip()} ({cpu_count} cores)"
    except Exception:
        pass
    return f"{platform.processor() or platform.machine()} ({cpu_count} cores)"


def get_ram_total() -> str:
    """Total RAM, e.g. "15.5GB"."""
    try:
        return f"{round(psutil.virtual_memory().total / (1024**3), 2)}GB"
    except Exception:
        return "0GB"


def get_peak_rss_mb() -> float:
    """Resident memory of this process in MB (peak where the platform reports it)."""
    try:
        info = psutil.Process().memory_info()
        peak = getattr(info, "peak_wset", None) or info.rss
        return round(peak / (1024**2), 1)
    except Exception:
        return 0.0


def get_host_info() -> Dict:
    """Static host data echoed into every run report."""
    import torch

    return {
        "os_name": get_os_info(),
        "hardware": get_cpu_info(),
        "ram_total": get_ram_total(),
        "python": platform.python_version(),
        "torch": torch.__version__,
        "torch_threads": torch.get_num_threads(),
    }


class Stopwatch:
    """Accumulates wall-clock seconds per named component."""

    def __init__(self) -> None:
        self.timings: Dict[str, float] = {}

    @contextmanager
    def timed(self, component: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            elapsed = time.perf_counter() - start
            self.timings[component] = round(self.timings.get(component, 0.0) + elapsed, 3)
            logger.info("%s finished in %.2fs (rss %.0f MB)", component, elapsed, get_peak_rss_mb())
