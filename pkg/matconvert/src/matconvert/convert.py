"""One-shot conversion of MATLAB vibration archives to manifest + raw floats.

The output format is the neutral dataset layout the diagnosis pipeline
ingests: a JSON manifest describing conditions, classes and recordings, plus
one headerless little-endian float32 file per recording. Channel values are
written exactly as stored in the archive, with no rescaling.
"""

import fnmatch
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.io


class ConvertError(ValueError):
    pass


@dataclass
class MapEntry:
    pattern: str        # literal file name or glob over the archive dir
    condition: str
    class_id: str


@dataclass
class ArchiveMap:
    """Editable description of one archive: files, labels, channel selection.

    channel_style:
      suffix  - pick the MAT variable whose name ends with `channel`
                (CWRU layout, e.g. X097_DE_time)
      named_y - pick the Y struct entry whose Name equals `channel`
                (Paderborn layout, e.g. vibration_1)
    """

    dataset: str
    sampling_rate_hz: float
    window_length: int
    window_step: int
    conditions: list
    classes: dict
    channel: str
    channel_style: str
    entries: list = field(default_factory=list)

    @classmethod
    def from_json(cls, path):
        doc = json.loads(Path(path).read_text())
        entries = [MapEntry(e["pattern"], e["condition"], e["class"])
                   for e in doc["files"]]
        return cls(
            dataset=doc["dataset"],
            sampling_rate_hz=doc["sampling_rate_hz"],
            window_length=doc["window_length"],
            window_step=doc["window_step"],
            conditions=list(doc["conditions"]),
            classes=dict(doc["classes"]),
            channel=doc["channel"],
            channel_style=doc["channel_style"],
            entries=entries,
        )

    def validate(self):
        for entry in self.entries:
            if entry.condition not in self.conditions:
                raise ConvertError(
                    f"map entry {entry.pattern}: unknown condition {entry.condition!r}")
            if entry.class_id not in self.classes:
                raise ConvertError(
                    f"map entry {entry.pattern}: unknown class {entry.class_id!r}")


def builtin_map_path(dataset):
    name = dataset.lower()
    if name not in ("cwru", "pu"):
        raise ConvertError(f"unknown dataset {dataset!r}; expected cwru or pu")
    return Path(__file__).parent / "maps" / f"{name}.json"


def load_builtin_map(dataset):
    return ArchiveMap.from_json(builtin_map_path(dataset))


# ---------------------------------------------------------------- channel readers


def read_channel(mat_path, channel, style):
    """Extract the selected vibration channel as a 1-D float array."""
    mat = scipy.io.loadmat(mat_path)
    if style == "suffix":
        names = [k for k in mat if k.endswith(channel)]
        if not names:
            raise ConvertError(
                f"{mat_path.name}: no variable ends with {channel!r} "
                f"(has {sorted(k for k in mat if not k.startswith('__'))})")
        return np.asarray(mat[sorted(names)[0]]).reshape(-1)
    if style == "named_y":
        roots = [k for k in mat if not k.startswith("__")]
        if not roots:
            raise ConvertError(f"{mat_path.name}: empty MAT container")
        struct = mat[roots[0]]
        try:
            y_entries = struct["Y"][0, 0][0]
            for item in y_entries:
                if str(np.squeeze(item["Name"])) == channel:
                    return np.asarray(item["Data"]).reshape(-1)
        except (IndexError, KeyError, ValueError, TypeError) as exc:
            raise ConvertError(f"{mat_path.name}: unexpected Y layout: {exc}") from exc
        raise ConvertError(f"{mat_path.name}: no Y entry named {channel!r}")
    raise ConvertError(f"unknown channel style {style!r}")


# ---------------------------------------------------------------- conversion


@dataclass
class ConversionReport:
    converted: list = field(default_factory=list)   # (mat file, raw file, samples)
    skipped: list = field(default_factory=list)     # unmapped archive files
    errors: list = field(default_factory=list)      # (mat file, message)


def convert_archive(archive_dir, archive_map, out_dir):
    """Convert every mapped file; returns the manifest path and a report.

    Unmapped archive files are listed and skipped; per-file parse failures
    are recorded and conversion continues. Re-running overwrites the same
    outputs byte for byte.
    """
    archive_dir = Path(archive_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    archive_map.validate()

    available = sorted(p.name for p in archive_dir.glob("*.mat"))
    matched = set()
    recordings = []
    report = ConversionReport()
    for entry in archive_map.entries:
        names = sorted(fnmatch.filter(available, entry.pattern))
        matched.update(names)
        for name in names:
            mat_path = archive_dir / name
            try:
                signal = read_channel(mat_path, archive_map.channel,
                                      archive_map.channel_style)
            except Exception as exc:
                report.errors.append((name, str(exc)))
                continue
            raw_name = f"{entry.condition}_{entry.class_id}_{Path(name).stem}.f32"
            signal.astype("<f4").tofile(out_dir / raw_name)
            recordings.append({
                "condition": entry.condition,
                "class": entry.class_id,
                "path": raw_name,
                "sample_count": int(signal.size),
            })
            report.converted.append((name, raw_name, int(signal.size)))

    report.skipped = [n for n in available if n not in matched]

    manifest = {
        "name": archive_map.dataset,
        "sampling_rate_hz": archive_map.sampling_rate_hz,
        "conditions": archive_map.conditions,
        "classes": archive_map.classes,
        "window_length": archive_map.window_length,
        "window_step": archive_map.window_step,
        "recordings": recordings,
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2))
    return manifest_path, report
