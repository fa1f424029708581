"""
产物读写：CSV/JSON 文件、数据集导入、运行清单

所有文件使用 UTF-8，浮点数统一格式化为 ".9g"，小数点固定为 "."，与 locale 无关。
清单不含时间戳，同一组参数重复运行得到逐字节相同的输出。
"""

import csv
import hashlib
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

from pydantic import BaseModel, ConfigDict, ValidationError

from .errors import DatasetError
from .fit import AutocorrDataset, DataPoint

logger = logging.getLogger(__name__)

MANIFEST_NAME: str = "run_manifest.json"
DATASET_COLUMNS = ("contrast", "sigma_err")


def format_float(value: Optional[float]) -> str:
    """CSV 单元格的浮点格式"""
    if value is None:
        return ""
    value = float(value)
    if math.isnan(value):
        return "nan"
    return format(value, ".9g")


def normalize_floats(value: Any) -> Any:
    """把 JSON 中的浮点数按 .9g 规整，nan/inf 写成 null"""
    if isinstance(value, bool) or value is None:
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            return None
        return float(format(value, ".9g"))
    if isinstance(value, dict):
        return {str(k): normalize_floats(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [normalize_floats(v) for v in value]
    return value


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """按给定表头写 CSV，数值列用 format_float"""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([cell if isinstance(cell, str) else format_float(cell) for cell in row])
    logger.info(f"已写入 {path}")
    return path


def write_json(path: Path, payload: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(normalize_floats(payload), indent=2, ensure_ascii=False, sort_keys=True)
    path.write_text(text + "\n", encoding="utf-8")
    logger.info(f"已写入 {path}")
    return path


def read_json(path: Path) -> Any:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DatasetError(f"file not found: {path}")
    except json.JSONDecodeError as e:
        raise DatasetError(f"malformed JSON in {path}: {e.msg}", line=e.lineno)


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


def ingest_dataset(path: Path, delay_column: str = "delay_ps") -> AutocorrDataset:
    """
    读取并校验 `delay_ps,contrast,sigma_err` 格式的数据集

    参数:
        path: CSV 文件路径
        delay_column: 第一列的列名（CPP 间隔扫描为 delay_us）

    返回:
        AutocorrDataset

    异常:
        DatasetError: 表头不符、数值非法、延迟重复或未排序、误差非正，
                      报告行号（表头为第 1 行）和列名
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"input file not found: {path}")
    expected = [delay_column, *DATASET_COLUMNS]

    with open(path, "r", encoding="utf-8", newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise DatasetError(f"empty dataset file: {path}", line=1)

    header = [cell.strip() for cell in rows[0]]
    if header != expected:
        missing = [c for c in expected if c not in header]
        extra = [c for c in header if c not in expected]
        detail = []
        if missing:
            detail.append(f"missing {missing}")
        if extra:
            detail.append(f"unexpected {extra}")
        if not detail:
            detail.append(f"columns out of order, expected {expected}")
        raise DatasetError(f"header mismatch: {'; '.join(detail)}", line=1)

    points: List[DataPoint] = []
    for line_no, row in enumerate(rows[1:], start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(expected):
            raise DatasetError(f"expected {len(expected)} fields, got {len(row)}", line=line_no)
        values = []
        for column, cell in zip(expected, row):
            try:
                value = float(cell)
            except ValueError:
                raise DatasetError(f"not a number: {cell.strip()!r}", line=line_no, column=column)
            if not math.isfinite(value):
                raise DatasetError(f"non-finite value {cell.strip()!r}", line=line_no, column=column)
            values.append(value)
        delay, contrast, sigma_err = values
        if sigma_err <= 0:
            raise DatasetError(f"sigma_err must be positive, got {sigma_err}", line=line_no, column="sigma_err")
        if not 0.0 <= contrast <= 1.0:
            raise DatasetError(f"contrast {contrast} outside [0, 1]", line=line_no, column="contrast")
        if points:
            previous = points[-1].delay
            if delay == previous:
                raise DatasetError(f"duplicate delay {delay}", line=line_no, column=delay_column)
            if delay < previous:
                raise DatasetError(f"delays not sorted ascending ({delay} after {previous})",
                                   line=line_no, column=delay_column)
        points.append(DataPoint(delay, contrast, sigma_err))

    unit = delay_column.split("_", 1)[1] if "_" in delay_column else "ps"
    try:
        dataset = AutocorrDataset(points=tuple(points), delay_unit=unit)
    except ValidationError as e:
        raise DatasetError(f"invalid dataset {path}: {e.errors()[0]['msg']}")
    logger.info(f"已读取数据集 {path}: {len(dataset)} 个数据点")
    return dataset


def write_dataset(path: Path, dataset: AutocorrDataset) -> Path:
    header = [f"delay_{dataset.delay_unit}", *DATASET_COLUMNS]
    return write_csv(path, header, dataset.points)


class RunManifest(BaseModel):
    """一次运行的可复现记录：命令、解析后的参数、版本、输入哈希、输出文件"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    command: str
    version: str
    parameters: Dict[str, Any]
    inputs: Dict[str, str] = {}
    outputs: List[str] = []
    seed: Optional[int] = None


def write_manifest(out_dir: Path, manifest: RunManifest) -> Path:
    return write_json(out_dir / MANIFEST_NAME, manifest.model_dump())
