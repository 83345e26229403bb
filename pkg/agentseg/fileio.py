# -*- coding: utf-8 -*-

"""
agentseg.fileio
---------------

File formats: delimited text tables (trajectories, ground truth,
segmentations, traces, reports, grids) read and written with pandas, and the
XML model file holding agents, HMM and EM settings.
"""

# pylint: disable=invalid-name  # Allows short reference names like A, b, Q, ...

from __future__ import annotations

import dataclasses
import xml.etree.ElementTree as ET
from collections.abc import Sequence
from dataclasses import dataclass
from io import StringIO

import numpy as np
import pandas as pd

from agentseg import __version__
from agentseg.core import (
    AgentModel,
    BeliefParams,
    DynamicsParams,
    MixtureModel,
    Segmentation,
    Trajectory,
)
from agentseg.em import EmConfig
from agentseg.errors import FileFormatError, ValidationError
from agentseg.hmm import HmmModel
from agentseg.metrics import CrossValidationReport, ErrorReport, as_mask
from agentseg.utils.loghelper import LOG

VERSION = ".".join(__version__.split(".", 2)[0:2])

TRAJECTORY_COLUMNS = ("trajectory_id", "frame_index", "x", "y")
GROUND_TRUTH_COLUMNS = ("trajectory_id", "point_index")
SEGMENTATION_COLUMNS = ("trajectory_id", "point_index", "label", "split")


def _read_table(fname: str, columns: Sequence[str]) -> pd.DataFrame:
    """Read a CSV table, checking its header"""
    try:
        df = pd.read_csv(
            fname,
            dtype={"trajectory_id": str},
            encoding="utf-8",
            float_precision="round_trip",
        )
    except (pd.errors.EmptyDataError, pd.errors.ParserError, UnicodeError) as exc:
        raise FileFormatError(f"{fname}: {exc}") from exc
    except OSError as exc:
        raise FileFormatError(f"{fname}: {exc.strerror or exc}") from exc
    missing = [name for name in columns if name not in df.columns]
    if missing:
        raise FileFormatError(f"{fname}: missing columns {', '.join(missing)}")
    return df


def _numeric(df: pd.DataFrame, fname: str, name: str, integer: bool = False):
    """Column `name` as numbers"""
    try:
        values = pd.to_numeric(df[name], errors="raise")
    except (ValueError, TypeError) as exc:
        raise FileFormatError(f"{fname}: column {name!r}: {exc}") from exc
    values = values.to_numpy()
    if integer:
        if not np.all(np.isfinite(values)) or np.any(values != np.round(values)):
            raise FileFormatError(f"{fname}: column {name!r} must hold integers")
        return values.astype(np.int64)
    return values.astype(float)


def _to_csv(df: pd.DataFrame, fname: str, header: bool = True):
    df.to_csv(fname, index=False, header=header, encoding="utf-8")
    LOG.debug("** fileio::write {}".format({"fname": fname, "rows": len(df)}))


# ---- Trajectories -----------------------------------------------------------
def read_trajectories(fname: str) -> list[Trajectory]:
    """Read trajectories (file order of first appearance)"""
    df = _read_table(fname, TRAJECTORY_COLUMNS)
    frames = _numeric(df, fname, "frame_index", integer=True)
    x = _numeric(df, fname, "x")
    y = _numeric(df, fname, "y")
    trajs = []
    for traj_id, rows in df.groupby("trajectory_id", sort=False).indices.items():
        points = np.column_stack((x[rows], y[rows]))
        trajs.append(Trajectory(traj_id, points, frames[rows]))
    LOG.info(f"{len(trajs)} trajectories read from {fname}")
    return trajs


def write_trajectories(fname: str, trajs: Sequence[Trajectory]):
    """Write trajectories"""
    rows = {name: [] for name in TRAJECTORY_COLUMNS}
    for traj in trajs:
        rows["trajectory_id"].extend([str(traj.id)] * traj.n_points)
        rows["frame_index"].extend(traj.frames.tolist())
        rows["x"].extend(traj.points[:, 0].tolist())
        rows["y"].extend(traj.points[:, 1].tolist())
    _to_csv(pd.DataFrame(rows, columns=TRAJECTORY_COLUMNS), fname)


def _index_of(trajs: Sequence[Trajectory]) -> dict:
    return {str(traj.id): index for index, traj in enumerate(trajs)}


# ---- Ground truth -----------------------------------------------------------
def read_ground_truth(fname: str, trajs: Sequence[Trajectory]) -> list[np.ndarray]:
    """Read ground-truth segmentation points as masks aligned with `trajs`

    Trajectories without rows get an empty mask.
    """
    df = _read_table(fname, GROUND_TRUTH_COLUMNS)
    indices = _numeric(df, fname, "point_index", integer=True)
    lookup = _index_of(trajs)
    masks = [np.zeros(traj.n_points, dtype=bool) for traj in trajs]
    for traj_id, index in zip(df["trajectory_id"], indices):
        if traj_id not in lookup:
            raise ValidationError(f"{fname}: unknown trajectory {traj_id!r}")
        mask = masks[lookup[traj_id]]
        if not 0 < index < mask.size - 1:
            raise ValidationError(
                f"{fname}: trajectory {traj_id!r}: point {index} is not interior"
            )
        mask[index] = True
    return masks


def write_ground_truth(fname: str, trajs: Sequence[Trajectory], masks: Sequence):
    """Write ground-truth segmentation points"""
    rows = {name: [] for name in GROUND_TRUTH_COLUMNS}
    for traj, mask in zip(trajs, masks):
        indices = np.flatnonzero(as_mask(mask)).tolist()
        rows["trajectory_id"].extend([str(traj.id)] * len(indices))
        rows["point_index"].extend(indices)
    _to_csv(pd.DataFrame(rows, columns=GROUND_TRUTH_COLUMNS), fname)


# ---- Segmentations ----------------------------------------------------------
def read_segmentations(fname: str) -> list[Segmentation]:
    """Read segmentations (point rows sorted by index within a trajectory)"""
    df = _read_table(fname, SEGMENTATION_COLUMNS)
    indices = _numeric(df, fname, "point_index", integer=True)
    labels = _numeric(df, fname, "label", integer=True)
    splits = _numeric(df, fname, "split", integer=True).astype(bool)
    segs = []
    for traj_id, rows in df.groupby("trajectory_id", sort=False).indices.items():
        if not np.array_equal(indices[rows], np.arange(rows.size)):
            raise FileFormatError(
                f"{fname}: trajectory {traj_id!r}: point indices must be 0..n-1"
            )
        segs.append(Segmentation(traj_id, labels[rows], splits[rows]))
    return segs


def write_segmentations(fname: str, segs: Sequence[Segmentation]):
    """Write segmentations"""
    rows = {name: [] for name in SEGMENTATION_COLUMNS}
    for seg in segs:
        rows["trajectory_id"].extend([str(seg.trajectory_id)] * len(seg))
        rows["point_index"].extend(range(len(seg)))
        rows["label"].extend(seg.labels.tolist())
        rows["split"].extend(seg.split_mask.astype(int).tolist())
    _to_csv(pd.DataFrame(rows, columns=SEGMENTATION_COLUMNS), fname)


def align_segmentations(
    segs: Sequence[Segmentation], trajs: Sequence[Trajectory]
) -> list[Segmentation]:
    """Segmentations reordered to follow `trajs`"""
    by_id = {str(seg.trajectory_id): seg for seg in segs}
    aligned = []
    for traj in trajs:
        seg = by_id.get(str(traj.id))
        if seg is None:
            raise ValidationError(f"no segmentation for trajectory {traj.id!r}")
        if len(seg) != traj.n_points:
            raise ValidationError(
                f"trajectory {traj.id!r}: {len(seg)} labels "
                f"for {traj.n_points} points"
            )
        aligned.append(seg)
    return aligned


# ---- Traces, reports and grids ----------------------------------------------
def write_trace(fname: str, trace, variant: str):
    """Write a log-likelihood trace"""
    trace = np.asarray(trace, dtype=float)
    df = pd.DataFrame(
        {
            "iteration": np.arange(trace.size),
            "log_likelihood": trace,
            "variant": [variant] * trace.size,
        }
    )
    _to_csv(df, fname)


def error_report_table(report: ErrorReport, method: str) -> pd.DataFrame:
    """One-row summary of an evaluation"""
    return pd.DataFrame(
        {
            "method": [method],
            "e_pos": [report.e_pos],
            "e_step": [report.e_step],
            "n_evaluated": [report.n_evaluated],
            "n_skipped": [len(report.skipped)],
        }
    )


def per_trajectory_table(report: ErrorReport) -> pd.DataFrame:
    """Errors of each evaluated trajectory"""
    return pd.DataFrame(
        [dataclasses.astuple(row) for row in report.per_trajectory],
        columns=["trajectory_id", "e_pos", "e_step", "n_est", "n_gt"],
    )


def summary_table(reports: Sequence[CrossValidationReport]) -> pd.DataFrame:
    """Cross-validation summary: one row per method, mean and std per column"""
    rows = []
    for report in reports:
        row = {"method": report.method}
        for name in ("parameter", "e_pos", "e_step"):
            row[f"{name}_mean"] = report.mean(name)
            row[f"{name}_std"] = report.std(name)
        row["n_folds"] = len(report.folds)
        row["n_failed"] = len(report.failed)
        rows.append(row)
    return pd.DataFrame(rows)


def folds_table(reports: Sequence[CrossValidationReport]) -> pd.DataFrame:
    """Cross-validation results of each fold"""
    rows = []
    for report in reports:
        for fold in report.folds:
            rows.append(
                {
                    "method": report.method,
                    "fold": fold.index,
                    "parameter": fold.parameter,
                    "e_pos": fold.report.e_pos,
                    "e_step": fold.report.e_step,
                    "n_evaluated": fold.report.n_evaluated,
                    "n_skipped": len(fold.report.skipped),
                }
            )
    columns = ["method", "fold", "parameter", "e_pos", "e_step"]
    return pd.DataFrame(rows, columns=columns + ["n_evaluated", "n_skipped"])


def write_table(fname: str, df: pd.DataFrame):
    """Write a report table"""
    _to_csv(df, fname)


def write_grid(fname: str, values):
    """Write a 2D array (no header, row 0 first)"""
    _to_csv(pd.DataFrame(np.asarray(values)), fname, header=False)


def read_grid(fname: str) -> np.ndarray:
    """Read a grid written by :func:`write_grid`"""
    try:
        df = pd.read_csv(fname, header=None, float_precision="round_trip")
    except (pd.errors.EmptyDataError, pd.errors.ParserError, OSError) as exc:
        raise FileFormatError(f"{fname}: {exc}") from exc
    return df.to_numpy()


def write_edges(fname: str, edges):
    """Write a thresholded transition graph"""
    df = pd.DataFrame(edges, columns=["source", "target", "weight"])
    _to_csv(df, fname)


# ---- Model file -------------------------------------------------------------
def _array_text(value) -> str:
    return " ".join(repr(float(item)) for item in np.ravel(value))


def _text_array(text: str | None, shape, name: str) -> np.ndarray:
    try:
        values = np.array([float(item) for item in (text or "").split()])
        return values.reshape(shape)
    except ValueError as exc:
        raise FileFormatError(f"invalid {name} values: {exc}") from exc


def _float_attr(element: ET.Element, name: str) -> float:
    text = element.get(name)
    if text is None:
        raise FileFormatError(f"<{element.tag}> has no {name!r} attribute")
    try:
        return float(text)
    except ValueError as exc:
        raise FileFormatError(f"<{element.tag}>: invalid {name!r}") from exc


def _child(element: ET.Element, tag: str) -> ET.Element:
    child = element.find(tag)
    if child is None:
        raise FileFormatError(f"<{element.tag}> has no <{tag}> element")
    return child


def _config_text(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(getattr(value, "value", value))


def _config_value(text: str, default):
    if text == "none":
        return None
    if isinstance(default, bool) or default is None:
        if text not in ("true", "false"):
            raise FileFormatError(f"invalid boolean {text!r}")
        return text == "true"
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text


AGENT_ARRAYS = (
    ("A", "dynamics", (2, 2)),
    ("b", "dynamics", (2,)),
    ("Q", "dynamics", (2, 2)),
    ("R", "dynamics", (2, 2)),
    ("mu_s", "belief", (2,)),
    ("Phi_s", "belief", (2, 2)),
    ("mu_e", "belief", (2,)),
    ("Phi_e", "belief", (2, 2)),
)


def agent_to_element(agent: AgentModel, parent: ET.Element, index: int):
    """Serialize agent to XML element"""
    attrib = {
        "index": str(index),
        "pi": repr(agent.pi),
        "lambda_s": repr(agent.lambda_s),
        "lambda_e": repr(agent.lambda_e),
    }
    element = ET.SubElement(parent, "AGENT", attrib=attrib)
    for name, group, _shape in AGENT_ARRAYS:
        value = getattr(getattr(agent, group), name)
        ET.SubElement(element, name.upper()).text = _array_text(value)
    return element


def agent_from_element(element: ET.Element) -> AgentModel:
    """Deserialize agent from XML element"""
    arrays = {
        name: _text_array(_child(element, name.upper()).text, shape, name)
        for name, _group, shape in AGENT_ARRAYS
    }
    return AgentModel(
        DynamicsParams(*(arrays[name] for name in ("A", "b", "Q", "R"))),
        BeliefParams(*(arrays[name] for name in ("mu_s", "Phi_s", "mu_e", "Phi_e"))),
        pi=_float_attr(element, "pi"),
        lambda_s=_float_attr(element, "lambda_s"),
        lambda_e=_float_attr(element, "lambda_e"),
    )


@dataclass(frozen=True, eq=False)
class ModelFile:
    """Content of a model file: agents, optional HMM and EM settings"""

    model: MixtureModel
    hmm: HmmModel | None = None
    em_config: EmConfig | None = None

    @classmethod
    def from_element(cls, element: ET.Element) -> ModelFile:
        """Instantiate from XML element"""
        if element.tag != "AGENTSEG":
            raise FileFormatError(f"unexpected root element <{element.tag}>")
        version = element.get("version")
        if version is None:
            raise FileFormatError("model file has no version")
        if version.split(".")[0] != VERSION.split(".")[0]:
            raise FileFormatError(f"unsupported model file version {version}")
        agents = sorted(
            _child(element, "AGENTS").findall("AGENT"),
            key=lambda elem: int(elem.get("index", "0")),
        )
        model = MixtureModel(tuple(agent_from_element(elem) for elem in agents))
        hmm = None
        hmm_elt = element.find("HMM")
        if hmm_elt is not None:
            n_agents = model.num_agents
            hmm = HmmModel(
                _text_array(
                    _child(hmm_elt, "TRANSITION").text, (n_agents, n_agents), "A"
                ),
                _text_array(_child(hmm_elt, "INITIAL").text, (n_agents,), "initial"),
                _text_array(_child(hmm_elt, "TRACE").text, (-1,), "trace"),
                int(hmm_elt.get("n_iter", "0")),
            )
        em_config = None
        em_elt = element.find("EMCONFIG")
        if em_elt is not None:
            values = {}
            for item in dataclasses.fields(EmConfig):
                text = em_elt.get(item.name)
                if text is not None:
                    values[item.name] = _config_value(text, item.default)
            try:
                em_config = EmConfig(**values)
            except ValidationError as exc:
                raise FileFormatError(f"invalid EM settings: {exc}") from exc
        return cls(model, hmm, em_config)

    def to_element(self) -> ET.Element:
        """Serialize to XML element"""
        base_elt = ET.Element("AGENTSEG")
        base_elt.set("version", VERSION)
        if self.em_config is not None:
            attrib = {
                item.name: _config_text(getattr(self.em_config, item.name))
                for item in dataclasses.fields(EmConfig)
            }
            ET.SubElement(base_elt, "EMCONFIG", attrib=attrib)
        agents_elt = ET.SubElement(base_elt, "AGENTS")
        for index, agent in enumerate(self.model):
            agent_to_element(agent, agents_elt, index)
        if self.hmm is not None:
            hmm_elt = ET.SubElement(
                base_elt, "HMM", attrib={"n_iter": str(self.hmm.n_iter)}
            )
            ET.SubElement(hmm_elt, "TRANSITION").text = _array_text(
                self.hmm.transition
            )
            ET.SubElement(hmm_elt, "INITIAL").text = _array_text(self.hmm.initial)
            ET.SubElement(hmm_elt, "TRACE").text = _array_text(self.hmm.trace)
        return base_elt

    @classmethod
    def from_text(cls, text: str) -> ModelFile:
        """Instantiate from XML text"""
        try:
            element = ET.fromstring(text)
        except ET.ParseError as exc:
            raise FileFormatError(f"invalid model file: {exc}") from exc
        return cls.from_element(element)

    def to_text(self) -> str:
        """Serialize to indented XML text"""
        tree = ET.ElementTree(self.to_element())
        ET.indent(tree)
        strio = StringIO()
        tree.write(strio, encoding="unicode")
        text = strio.getvalue()
        strio.close()
        return text

    @classmethod
    def from_filename(cls, fname: str) -> ModelFile:
        """Instantiate from XML file"""
        try:
            with open(fname, "rb") as fdesc:
                xmlcode = fdesc.read().decode("utf-8")
        except (OSError, UnicodeError) as exc:
            raise FileFormatError(f"{fname}: {exc}") from exc
        return cls.from_text(xmlcode)

    def to_filename(self, fname: str):
        """Serialize to XML file"""
        tree = ET.ElementTree(self.to_element())
        ET.indent(tree)
        tree.write(fname, encoding="utf-8")
        LOG.debug("** fileio::ModelFile.to_filename {}".format({"fname": fname}))
