import csv
import hashlib
import io
import json
import shutil
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Iterable, Optional

from utils.errors import MissingInputError


def sha256_bytes(data: bytes) -> str:
  return hashlib.sha256(data).hexdigest()


def sha256_file(path: Path) -> str:
  return sha256_bytes(Path(path).read_bytes())


def json_bytes(payload) -> bytes:
  return (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode("utf-8")


def csv_bytes(header: list[str], rows: Iterable[list]) -> bytes:
  buffer = io.StringIO()
  writer = csv.writer(buffer, lineterminator="\n")
  writer.writerow(header)
  writer.writerows(rows)
  return buffer.getvalue().encode("utf-8")


class OutputWriter:
  """
  Every file of a run goes through one writer thread, in submission order.
  Files land in `<directory>.partial` and the directory is swapped in on a
  clean exit; on any error the partial output is removed.
  """

  def __init__(self, directory, formats=("json", "csv")):
    self.directory = Path(directory)
    self.partial = self.directory.with_name(self.directory.name + ".partial")
    self.formats = set(formats)
    self.executor: Optional[ThreadPoolExecutor] = None
    self.futures = []
    self.hashes: dict[str, str] = {}

  def __enter__(self):
    shutil.rmtree(self.partial, ignore_errors=True)
    self.partial.mkdir(parents=True)
    self.executor = ThreadPoolExecutor(max_workers=1)
    return self

  def __exit__(self, exc_type, exc, tb):
    self.executor.shutdown(wait=True)
    if exc_type is not None:
      shutil.rmtree(self.partial, ignore_errors=True)
      return False
    try:
      self.wait()
    except Exception:
      shutil.rmtree(self.partial, ignore_errors=True)
      raise
    if self.directory.exists():
      shutil.rmtree(self.directory)
    self.partial.rename(self.directory)
    return False

  def wait(self):
    for future in self.futures:
      future.result()
    self.futures = []

  def _write(self, relative: str, data: bytes, hashed: bool = True):
    path = self.partial / relative
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    if hashed:
      self.hashes[relative] = sha256_bytes(data)

  def write_json(self, relative: str, payload, hashed: bool = True, force: bool = False):
    if "json" not in self.formats and not force:
      return
    self.futures.append(self.executor.submit(self._write, relative, json_bytes(payload), hashed))

  def write_csv(self, relative: str, header: list[str], rows: Iterable[list]):
    if "csv" not in self.formats:
      return
    self.futures.append(self.executor.submit(self._write, relative, csv_bytes(header, list(rows))))

  def data_hashes(self) -> dict[str, str]:
    self.wait()
    return dict(sorted(self.hashes.items()))


def read_json(path: Path):
  return json.loads(Path(path).read_text())


def read_csv(path: Path) -> list[dict]:
  with open(path, newline="") as handle:
    return list(csv.DictReader(handle))


def require_files(directory: Path, names: Iterable[str]) -> list[Path]:
  directory = Path(directory)
  paths = [directory / name for name in names]
  missing = [path for path in paths if not path.exists()]
  if missing:
    raise MissingInputError(missing)
  return paths
