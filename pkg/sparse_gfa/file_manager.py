"""Model directory layout: writing and reading fit outputs."""

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .components import ComponentReport
from .exceptions import FileError, IntegrityError
from .gibbs import ChainSelection, ChainTrace, PosteriorSummary
from .manifest import RunManifest, safe_name
from .model import ModelState, variance_explained
from .validation import SimilarityCurve

FLOAT_FORMAT = "%.17g"

STATUS_COMPLETE = "complete"
STATUS_FAILED = "failed"


def _component_names(k: int) -> List[str]:
    return [f"k{i}" for i in range(k)]


def _write_table(frame: pd.DataFrame, path: Path, index: bool = True) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(
        path,
        sep="\t",
        index=index,
        float_format=FLOAT_FORMAT,
        lineterminator="\n",
        quoting=csv.QUOTE_MINIMAL,
    )
    return path


def _read_table(path: Path, index: bool = True) -> pd.DataFrame:
    if not path.exists():
        raise IntegrityError(f"missing model file: {path}")
    try:
        return pd.read_csv(
            path,
            sep="\t",
            index_col=0 if index else None,
            dtype=str,
            keep_default_na=False,
        )
    except Exception as e:
        raise IntegrityError(f"unreadable model file {path}: {e}")


@dataclass
class SummaryBundle:
    """A posterior summary read back together with its labels."""

    summary: PosteriorSummary
    sample_ids: List[str]
    view_names: List[str]
    feature_names: Dict[str, List[str]]


class ModelDirectory:
    """Manages the files of one fitted model."""

    MANIFEST = "manifest.json"
    FIT_REPORT = "fit_report.json"
    CHAINS = "chains"
    SUMMARY = "summary"
    REPORTS = "reports"
    VALIDATION = "validation"

    def __init__(self, base_dir: Union[str, Path], create: bool = False):
        """Initialize the model directory.

        Args:
            base_dir: Directory holding the model files
            create: Create the directory if it does not exist
        """
        self.base_dir = Path(base_dir)
        if create:
            self.base_dir.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def safe_name(name: str) -> str:
        """Filesystem-safe version of a view name."""
        return safe_name(name)

    def path(self, *parts: str) -> Path:
        return self.base_dir.joinpath(*parts)

    def chain_dir(self, chain_index: int) -> Path:
        return self.path(self.CHAINS, f"chain_{chain_index:02d}")

    def write_manifest(self, manifest: RunManifest) -> Path:
        return manifest.save(self.path(self.MANIFEST))

    def read_manifest(self) -> RunManifest:
        path = self.path(self.MANIFEST)
        if not path.exists():
            raise IntegrityError(f"missing model file: {path}")
        return RunManifest.load(path)

    def write_json(self, name: str, data: Dict[str, Any]) -> Path:
        path = self.path(name)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        except OSError as e:
            raise FileError(f"Failed to write {path}: {e}")
        return path

    def read_fit_report(self) -> Dict[str, Any]:
        path = self.path(self.FIT_REPORT)
        if not path.exists():
            raise IntegrityError(f"missing model file: {path}")
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise IntegrityError(f"corrupt fit report {path}: {e}")

    def mark_failed(self, message: str) -> Path:
        """Flag the directory as holding partial outputs."""
        return self.write_json(self.FIT_REPORT, {"status": STATUS_FAILED, "error": message})

    def write_chains(self, traces: Sequence[ChainTrace], selection: Optional[ChainSelection]) -> None:
        rows = []
        for trace in traces:
            frame = pd.DataFrame(
                {
                    "sweep": np.arange(1, len(trace.log_densities) + 1),
                    "log_density": trace.log_densities,
                }
            )
            _write_table(frame, self.chain_dir(trace.chain_index) / "log_density.tsv", index=False)
            outlier = selection is not None and trace.chain_index in selection.outliers
            rows.append(
                {
                    "chain": trace.chain_index,
                    "seed": str(trace.seed),
                    "status": STATUS_FAILED if trace.failed else STATUS_COMPLETE,
                    "mean_log_density": np.nan if trace.failed else trace.mean_log_density,
                    "outlier": int(outlier),
                    "selected": int(selection is not None and selection.selected == trace.chain_index),
                    "error": trace.error or "",
                }
            )
        _write_table(pd.DataFrame(rows), self.path(self.CHAINS, "chains.tsv"), index=False)

    def write_summary(
        self,
        summary: PosteriorSummary,
        sample_ids: Sequence[str],
        view_names: Sequence[str],
        feature_names: Dict[str, Sequence[str]],
        activity: np.ndarray,
    ) -> None:
        state = summary.mean_state
        columns = _component_names(state.K)
        summary_dir = self.path(self.SUMMARY)

        _write_table(
            pd.DataFrame(state.Z, index=pd.Index(sample_ids, name="sample_id"), columns=columns),
            summary_dir / "Z.tsv",
        )
        tau_rows = []
        for m, name in enumerate(view_names):
            index = pd.Index(feature_names[name], name="feature")
            safe = self.safe_name(name)
            _write_table(pd.DataFrame(state.W[m], index=index, columns=columns), summary_dir / f"W_{safe}.tsv")
            _write_table(
                pd.DataFrame(state.alpha[m], index=index, columns=columns),
                summary_dir / f"alpha_{safe}.tsv",
            )
            tau_rows.append(
                pd.DataFrame({"view": name, "feature": feature_names[name], "tau": state.tau[m]})
            )
        _write_table(pd.concat(tau_rows, ignore_index=True), summary_dir / "tau.tsv", index=False)
        _write_table(
            pd.DataFrame({"component": columns, "pi": state.pi}), summary_dir / "pi.tsv", index=False
        )
        views_index = pd.Index(list(view_names), name="view")
        _write_table(
            pd.DataFrame(summary.activity_mean, index=views_index, columns=columns),
            summary_dir / "activity_mean.tsv",
        )
        _write_table(
            pd.DataFrame(activity, index=views_index, columns=columns), summary_dir / "activity.tsv"
        )
        _write_table(
            pd.DataFrame({"component": columns, "variance_explained": variance_explained(state)}),
            summary_dir / "variance.tsv",
            index=False,
        )

    def read_summary(self) -> SummaryBundle:
        """Rebuild the posterior summary written by ``write_summary``."""
        summary_dir = self.path(self.SUMMARY)
        z = _read_table(summary_dir / "Z.tsv")
        activity_mean = _read_table(summary_dir / "activity_mean.tsv")
        view_names = [str(v) for v in activity_mean.index]
        tau_table = _read_table(summary_dir / "tau.tsv", index=False)
        pi = _read_table(summary_dir / "pi.tsv", index=False)

        W, alpha, tau, features = [], [], [], {}
        for name in view_names:
            safe = self.safe_name(name)
            w = _read_table(summary_dir / f"W_{safe}.tsv")
            a = _read_table(summary_dir / f"alpha_{safe}.tsv")
            W.append(w.to_numpy(dtype=float))
            alpha.append(a.to_numpy(dtype=float))
            features[name] = [str(f) for f in w.index]
            tau.append(tau_table.loc[tau_table["view"].astype(str) == name, "tau"].to_numpy(dtype=float))

        activity = activity_mean.to_numpy(dtype=float)
        H = np.stack([np.any(w != 0, axis=0) for w in W]).astype(np.int8)
        state = ModelState(
            Z=z.to_numpy(dtype=float),
            W=W,
            H=H,
            pi=pi["pi"].to_numpy(dtype=float),
            alpha=alpha,
            tau=tau,
        )
        try:
            state.validate()
        except Exception as e:
            raise IntegrityError(f"inconsistent summary in {summary_dir}: {e}")

        report = self.read_fit_report()
        summary = PosteriorSummary(
            mean_state=state, activity_mean=activity, n_states=int(report.get("n_states", 0))
        )
        return SummaryBundle(
            summary=summary,
            sample_ids=[str(s) for s in z.index],
            view_names=view_names,
            feature_names=features,
        )

    def write_reports(self, reports: Sequence[ComponentReport], view_names: Sequence[str]) -> None:
        report_dir = self.path(self.REPORTS)
        component_rows, sample_rows, loading_rows = [], [], []
        for r in reports:
            row = {
                "component": f"k{r.component_id}",
                "label": r.label,
                "kind": r.kind.value,
                "role": r.role or "",
                "variance": r.variance,
                "variance_rank": r.variance_rank,
                "n_significant": len(r.significant_samples),
            }
            row.update({f"active_{name}": flag for name, flag in zip(view_names, r.activity)})
            component_rows.append(row)
            for s in r.significant_samples:
                sample_rows.append(
                    {
                        "label": r.label,
                        "component": f"k{r.component_id}",
                        "sample_id": s.sample_id,
                        "score": s.score,
                        "q_value": s.q_value,
                    }
                )
            for view, top in r.top_loadings.items():
                for rank, entry in enumerate(top.entries, start=1):
                    loading_rows.append(
                        {
                            "label": r.label,
                            "component": f"k{r.component_id}",
                            "view": view,
                            "rank": rank,
                            "feature": entry.feature,
                            "weight": entry.weight,
                            "degenerate": int(top.degenerate),
                        }
                    )

        component_columns = ["component", "label", "kind", "role", "variance", "variance_rank", "n_significant"]
        component_columns += [f"active_{name}" for name in view_names]
        _write_table(
            pd.DataFrame(component_rows, columns=component_columns),
            report_dir / "components.tsv",
            index=False,
        )
        _write_table(
            pd.DataFrame(sample_rows, columns=["label", "component", "sample_id", "score", "q_value"]),
            report_dir / "significant_samples.tsv",
            index=False,
        )
        _write_table(
            pd.DataFrame(
                loading_rows,
                columns=["label", "component", "view", "rank", "feature", "weight", "degenerate"],
            ),
            report_dir / "top_loadings.tsv",
            index=False,
        )

    def read_significant_samples(self) -> pd.DataFrame:
        return _read_table(self.path(self.REPORTS, "significant_samples.tsv"), index=False)

    def read_components(self) -> pd.DataFrame:
        return _read_table(self.path(self.REPORTS, "components.tsv"), index=False)

    def write_curve(self, curve: SimilarityCurve) -> Path:
        return _write_table(curve.to_frame(), self.path(self.VALIDATION, "curve.tsv"), index=False)

    def verify(self) -> None:
        """Check that the directory holds a complete fit.

        Raises:
            IntegrityError: If files are missing or the fit did not complete
        """
        if not self.base_dir.is_dir():
            raise IntegrityError(f"model directory not found: {self.base_dir}")
        report = self.read_fit_report()
        if report.get("status") != STATUS_COMPLETE:
            raise IntegrityError(
                f"model directory {self.base_dir} holds a failed or partial fit: "
                f"{report.get('error', 'unknown status')}"
            )
        self.read_manifest()
        for name in ("Z.tsv", "activity_mean.tsv", "activity.tsv", "tau.tsv", "pi.tsv"):
            if not self.path(self.SUMMARY, name).exists():
                raise IntegrityError(f"missing model file: {self.path(self.SUMMARY, name)}")
