import csv
import json
import shutil
from pathlib import Path
from typing import Iterable, Sequence

from fastapi import UploadFile

from logs.logging_config import logger


def save_upload_to_file(upload_file: UploadFile, target_dir: Path) -> Path:
    """
    Save an uploaded file to target directory.

    Args:
        upload_file: FastAPI UploadFile object
        target_dir: Target directory to save the file

    Returns:
        Path to the saved file

    Raises:
        ValueError: If upload_file has no filename
        RuntimeError: If save operation fails
    """
    if not upload_file.filename:
        logger.error("UploadFile provided with no filename")
        raise ValueError("UploadFile must have a filename")

    logger.debug("Saving uploaded file: %s, Target dir: %s", upload_file.filename, target_dir)

    target_dir.mkdir(parents=True, exist_ok=True)
    target_path: Path = target_dir / Path(upload_file.filename).name

    try:
        with target_path.open("wb") as buffer:
            shutil.copyfileobj(upload_file.file, buffer)
        logger.debug("Successfully saved upload %s to %s", upload_file.filename, target_dir)
        return target_path
    except Exception as e:
        logger.error("Failed to save upload: %s", e, exc_info=True)
        raise RuntimeError(f"Upload save operation failed: {str(e)}") from e


def save_str_to_file(content: str, target_path: Path, encoding: str = "utf-8") -> Path:
    """
    Save text content to a file.

    Args:
        content: String content to save
        target_path: Full path including filename with extension
        encoding: Text encoding to use

    Returns:
        Path to saved file

    Raises:
        RuntimeError: If save operation fails
    """
    try:
        target_path.parent.mkdir(parents=True, exist_ok=True)

        with target_path.open("w", encoding=encoding) as f:
            f.write(content)

        logger.debug("Saved text content to %s", target_path)
        return target_path

    except Exception as e:
        logger.error("Failed to save text file: %s", e, exc_info=True)
        raise RuntimeError(f"Text save failed: {str(e)}") from e


def save_json(record: dict, target_path: Path) -> Path:
    """Writes ``record`` as indented JSON, e.g. the metadata sidecar of a reconstruction."""
    return save_str_to_file(json.dumps(record, indent=2, sort_keys=True) + "\n", target_path)


def append_csv_rows(target_path: Path, header: Sequence[str], rows: Iterable[Sequence[str]]) -> Path:
    """
    Appends rows to a CSV table, writing ``header`` only when the file is new or empty.

    Raises:
        ValueError: If an existing table has a different header
        RuntimeError: If the write fails
    """
    try:
        target_path.parent.mkdir(parents=True, exist_ok=True)
        is_new = not target_path.exists() or target_path.stat().st_size == 0
        if not is_new:
            with target_path.open("r", encoding="utf-8", newline="") as f:
                existing = next(csv.reader(f), [])
            if list(existing) != list(header):
                raise ValueError(f"{target_path} has header {existing}, expected {list(header)}")

        count = 0
        with target_path.open("a", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            if is_new:
                writer.writerow(header)
            for row in rows:
                writer.writerow(row)
                count += 1
        logger.debug("Appended %d rows to %s", count, target_path)
        return target_path

    except ValueError:
        raise
    except Exception as e:
        logger.error("Failed to write CSV %s: %s", target_path, e, exc_info=True)
        raise RuntimeError(f"CSV write failed: {str(e)}") from e


def read_key_value_file(source_path: Path) -> dict[str, str]:
    """
    Reads ``key = value`` lines; blank lines and ``#`` comments are skipped.

    Raises:
        FileNotFoundError: If the file doesn't exist
        ValueError: On a line without ``=``
    """
    if not source_path.exists():
        logger.error("Config file not found: %s", source_path)
        raise FileNotFoundError(f"Config file not found: {source_path}")

    values: dict[str, str] = {}
    for number, raw in enumerate(source_path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ValueError(f"{source_path}:{number}: expected 'key = value', got '{raw.strip()}'")
        values[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    logger.debug("Read %d settings from %s", len(values), source_path)
    return values
