# %%
import json
import math
from pathlib import Path
from typing import Any, Union

import pandas as pd


def _validate_dataframe_columns(
        df: pd.DataFrame,
        required_columns: list[str]
) -> None:
    r"""
    Validates the presence of DataFrame columns.

    Parameters
    ----------
    df : pd.DataFrame
        The DataFrame to validate.
    required_columns : list[str]
        Column names which must be present.

    Returns
    -------
    None
        This function does not return anything if validation is successful.

    Raises
    ------
    TypeError
        If `df` is not a DataFrame.
    ValueError
        If columns are missing.
    """
    if not isinstance(df, pd.DataFrame):
        raise TypeError("df must be a Pandas DataFrame")
    missing_columns = [col for col in required_columns if col not in df.columns]
    if missing_columns:
        raise ValueError(f"DataFrame is missing required columns: {missing_columns}")


def _json_safe(obj: Any) -> Any:
    """
    Replaces missing values and non-finite floats by `None` and numpy scalars by Python scalars, recursively.
    """
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if hasattr(obj, 'item') and not isinstance(obj, (str, bytes)):
        obj = obj.item()
    if obj is pd.NA:
        return None
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def dumps_json(obj: Any) -> str:
    """
    Serialises `obj` to JSON with sorted keys, so that equal objects give identical text.
    """
    return json.dumps(_json_safe(obj), sort_keys=True, indent=2, ensure_ascii=False) + '\n'


def dumps_csv(df: pd.DataFrame) -> str:
    """
    Serialises a DataFrame to CSV with a header row, no index, `.` as decimal separator
    and floats written with `repr` precision.
    """
    return df.to_csv(index=False, lineterminator='\n', float_format='%.17g')


def export_dataframe(
        df: pd.DataFrame,
        path: Union[str, Path],
        file_format: str = 'csv'
) -> Path:
    """
    Given a DataFrame, export it to a UTF-8 CSV or JSON file.

    JSON files hold a list of records, one per row.
    Writing the same DataFrame twice gives byte-identical files.

    Parameters
    ----------
    df : pd.DataFrame
        DataFrame to export.
    path : str | Path
        Destination file path. Missing parent directories are created.
    file_format : str
        `csv` or `json`.

    Returns
    -------
    Path
        The destination path.

    Raises
    ------
    ValueError
        If `file_format` is unknown.
    """
    if file_format not in ('csv', 'json'):
        raise ValueError(f"file_format must be 'csv' or 'json', got '{file_format}'")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if file_format == 'csv':
        text = dumps_csv(df)
    else:
        text = dumps_json(df.to_dict(orient='records'))
    with open(path, 'w', encoding='utf-8', newline='\n') as file:
        file.write(text)
    return path


def export_json(
        obj: Any,
        path: Union[str, Path]
) -> Path:
    """
    Writes `obj` to a UTF-8 JSON file with sorted keys.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as file:
        file.write(dumps_json(obj))
    return path
