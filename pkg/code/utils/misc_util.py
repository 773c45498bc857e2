import sys
import os
import re
import hashlib
import importlib
from typing import Any, Optional

import yaml

CODE_VERSION = "slipt-rsma-0.1.0"


class EasyDict(dict):
    """Run arguments with attribute access; nested sections stay plain dicts."""
    def __getattr__(self, name: str) -> Any:
        try:
            return self[name]
        except KeyError:
            raise AttributeError(name)

    def __setattr__(self, name: str, value: Any) -> None:
        self[name] = value

    def __delattr__(self, name: str) -> None:
        del self[name]


class Logger(object):
    """Tee stdout and stderr into a run log file until closed."""
    def __init__(self, file_name: Optional[str] = None, file_mode: str = "w"):
        self.file = open(file_name, file_mode) if file_name is not None else None
        self.stdout, self.stderr = sys.stdout, sys.stderr
        sys.stdout = sys.stderr = self

    def __enter__(self) -> "Logger":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def write(self, text) -> None:
        if isinstance(text, bytes):
            text = text.decode()
        if not text:
            return
        if self.file is not None:
            self.file.write(text)
        self.stdout.write(text)
        self.flush()

    def flush(self) -> None:
        if self.file is not None:
            self.file.flush()
        self.stdout.flush()

    def close(self) -> None:
        self.flush()
        # only restore streams this logger still owns
        if sys.stdout is self:
            sys.stdout = self.stdout
        if sys.stderr is self:
            sys.stderr = self.stderr
        if self.file is not None:
            self.file.close()
            self.file = None


def get_obj_by_name(name: str) -> Any:
    """Resolve a dotted name such as `torch.optim.SGD`, importing the longest module prefix."""
    parts = name.split(".")
    for split in range(len(parts) - 1, 0, -1):
        try:
            obj = importlib.import_module(".".join(parts[:split]))
        except ModuleNotFoundError:
            continue
        try:
            for attr in parts[split:]:
                obj = getattr(obj, attr)
        except AttributeError:
            continue
        return obj
    raise ImportError(f"cannot resolve {name!r}")


def construct_class_by_name(*args, class_name: str = None, **kwargs) -> Any:
    assert class_name is not None
    cls = get_obj_by_name(class_name)
    assert callable(cls), f"{class_name} is not callable"
    return cls(*args, **kwargs)


def ensure_dir(path, show_info=True):
    if show_info:
        print(("Using existing folder " if os.path.isdir(path) else "Create folder ") + path)
    os.makedirs(path, exist_ok=True)


def find_latest_model_path(dirname, prefix=""):
    """Entry `<prefix><n>` of `dirname` with the largest n, or None."""
    if not os.path.isdir(dirname):
        return None
    pattern = re.compile(re.escape(prefix) + r"(\d+)$")
    numbered = [(int(m.group(1)), f) for f in os.listdir(dirname) if (m := pattern.match(f))]
    if not numbered:
        return None
    return os.path.join(dirname, max(numbered)[1])


def to_plain(obj: Any) -> Any:
    """Recursively turn dict subclasses and tuples into plain YAML-safe containers."""
    if isinstance(obj, dict):
        return {k: to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    return obj


def config_hash(*sections: dict) -> str:
    """First 12 hex digits of the SHA-256 of the canonical YAML of the given config sections."""
    text = "\n---\n".join(yaml.safe_dump(to_plain(s), sort_keys=True) for s in sections)
    return hashlib.sha256(text.encode()).hexdigest()[:12]
