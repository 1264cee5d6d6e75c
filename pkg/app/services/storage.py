import csv
import io
import json
import uuid
import aiofiles
from pathlib import Path
from fastapi import UploadFile
from app.config import settings
from app.services.stats import Experiment

CSV_COLUMNS = ["sample_id", "length", "height", "stat_value", "normalized_value"]


class StorageService:
    """Report files: one CSV per experiment plus a JSON-lines sidecar."""

    @staticmethod
    def experiment_csv(experiment: Experiment) -> str:
        """
        Render the per-sample CSV.

        A ``delta_power`` column is appended for spherical monoids.

        Args:
            experiment: finished concentration experiment

        Returns:
            CSV text with a header row
        """
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        powers = experiment.delta_powers
        writer.writerow(CSV_COLUMNS + (["delta_power"] if powers is not None else []))
        k = experiment.report.k
        for i, (value, height, normalized) in enumerate(
            zip(experiment.values, experiment.heights, experiment.normalized)
        ):
            row = [i, k, int(height), repr(float(value)), repr(float(normalized))]
            if powers is not None:
                row.append(int(powers[i]))
            writer.writerow(row)
        return buffer.getvalue()

    @staticmethod
    def sidecar_lines(config: dict, report: dict) -> str:
        return json.dumps({"config": config}, sort_keys=True) + "\n" + json.dumps({"report": report}, sort_keys=True) + "\n"

    @staticmethod
    def sidecar_path(csv_path: Path) -> Path:
        return csv_path.with_suffix(".jsonl")

    def write_experiment(self, csv_path: Path, experiment: Experiment, config: dict, report: dict) -> Path:
        """
        Write the CSV and its sidecar next to it.

        Returns:
            Path of the CSV file
        """
        csv_path = Path(csv_path)
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        csv_path.write_text(self.experiment_csv(experiment), encoding="utf-8")
        self.sidecar_path(csv_path).write_text(self.sidecar_lines(config, report), encoding="utf-8")
        return csv_path

    async def save_experiment(self, run_id: str, experiment: Experiment, config: dict, report: dict) -> str:
        """
        Async variant used by the API; files land under the reports directory.

        Returns:
            Path of the CSV relative to the storage root
        """
        settings.REPORTS_PATH.mkdir(parents=True, exist_ok=True)
        csv_path = settings.REPORTS_PATH / f"{run_id}.csv"
        async with aiofiles.open(csv_path, "w", encoding="utf-8") as f:
            await f.write(self.experiment_csv(experiment))
        async with aiofiles.open(self.sidecar_path(csv_path), "w", encoding="utf-8") as f:
            await f.write(self.sidecar_lines(config, report))
        return f"reports/{csv_path.name}"

    @staticmethod
    async def save_upload(file: UploadFile) -> Path:
        """
        Save an uploaded monoid spec under the uploads directory.

        Returns:
            Full path of the saved file (named after a fresh uuid, original stem kept)
        """
        uploads = settings.STORAGE_PATH / "uploads"
        uploads.mkdir(parents=True, exist_ok=True)
        stem = Path(file.filename or "monoid").stem or "monoid"
        filepath = uploads / f"{uuid.uuid4()}_{stem}.monoid"
        async with aiofiles.open(filepath, "wb") as f:
            content = await file.read()
            await f.write(content)
        return filepath
