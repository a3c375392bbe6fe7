//! Brain graphs from ROI time series, cohort manifests, and synthetic cohorts.

mod manifest;
mod synth;
mod timeseries;

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

pub use manifest::{CohortManifest, ManifestEntry, ATLAS_DEFAULT, MANIFEST_SCHEMA_VERSION};
pub use synth::{synth_cohort, write_synth_cohort, SynthCohort, SynthConfig, SIGNATURE_ROIS};
pub use timeseries::{
    load_timeseries, prepare_timeseries, read_timeseries_rows, write_timeseries, zscore_rows, LoadOptions,
    TimeLengthPolicy,
};

use crate::error::{Error, Result};
use crate::graph::{AdjacencyMatrix, FeatureMatrix};

/// ROIs in the default atlas scheme.
pub const N_ROIS: usize = 110;
/// ROIs plus the global-mean node.
pub const N_NODES: usize = N_ROIS + 1;
/// Edges of the default brain graph: all ROI pairs, one self-loop per ROI,
/// and a link from the global node to every ROI.
pub const DEFAULT_EDGE_COUNT: usize = 6215;

/// Diagnostic group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Control,
    Asd,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Control => 0,
            Label::Asd => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::Control),
            1 => Some(Label::Asd),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Control => "control",
            Label::Asd => "ASD",
        })
    }
}

impl FromStr for Label {
    type Err = Error;

    /// Accepts ABIDE `DX_GROUP` codes (1 = autism, 2 = control), `0`, and
    /// the names `asd`/`autism`/`control`/`tc`/`td`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "asd" | "autism" => Ok(Label::Asd),
            "0" | "2" | "control" | "tc" | "td" => Ok(Label::Control),
            other => Err(Error::Invalid(format!("unknown diagnostic group `{other}`"))),
        }
    }
}

/// One subject's brain graph.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectGraph {
    pub subject_id: String,
    /// ROI rows followed by the global-mean row; columns are time points.
    pub feats: FeatureMatrix,
    pub adj: AdjacencyMatrix,
    pub label: Option<Label>,
}

impl SubjectGraph {
    pub fn n_nodes(&self) -> usize {
        self.feats.n()
    }

    pub fn n_timepoints(&self) -> usize {
        self.feats.d()
    }
}

/// Builds the brain graph from an `n_rois × T` matrix.
///
/// Appends a global-mean node (column-wise mean of the ROI rows). Edges, all
/// with weight 1: every unordered ROI pair, a self-loop on every ROI, and the
/// global node to every ROI. For 110 ROIs that is 5995 + 110 + 110 = 6215.
pub fn build_brain_graph(
    subject_id: impl Into<String>,
    ts: &FeatureMatrix,
    label: Option<Label>,
) -> Result<SubjectGraph> {
    let n_rois = ts.n();
    if n_rois == 0 {
        return Err(Error::Shape("time-series matrix has no ROI rows".into()));
    }
    let t = ts.d();
    let mut feats = Array2::zeros((n_rois + 1, t));
    feats.slice_mut(s![..n_rois, ..]).assign(ts.as_array());
    let mean = ts
        .as_array()
        .mean_axis(Axis(0))
        .expect("at least one row");
    feats.row_mut(n_rois).assign(&mean);

    let global = n_rois;
    let mut triplets = Vec::with_capacity(n_rois * (n_rois + 1) / 2 + n_rois);
    for i in 0..n_rois {
        for j in i..n_rois {
            triplets.push((i, j, 1.0));
        }
        triplets.push((i, global, 1.0));
    }
    let adj = AdjacencyMatrix::from_triplets(n_rois + 1, false, triplets)?;
    Ok(SubjectGraph {
        subject_id: subject_id.into(),
        feats: FeatureMatrix::new(feats)?,
        adj,
        label,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn default_scheme_counts() {
        let mut rng = RngStream::new(1);
        let ts = FeatureMatrix::new(Array2::from_shape_fn((N_ROIS, 20), |_| rng.normal())).unwrap();
        let g = build_brain_graph("s", &ts, None).unwrap();
        assert_eq!(g.n_nodes(), N_NODES);
        assert_eq!(g.adj.edge_count(), DEFAULT_EDGE_COUNT);
        // ROI-ROI pairs plus self loops
        let roi_edges = g
            .adj
            .entries()
            .filter(|&(i, j, _)| i <= j && j < N_ROIS)
            .count();
        assert_eq!(roi_edges, 6105);
        for d in 0..20 {
            let m: f64 = (0..N_ROIS).map(|i| ts.view()[[i, d]]).sum::<f64>() / N_ROIS as f64;
            assert!((g.feats.view()[[N_ROIS, d]] - m).abs() < 1e-9);
        }
    }

    #[test]
    fn global_row_permutation_invariant() {
        let a = FeatureMatrix::new(ndarray::array![[1.0, 2.0], [1.0, 2.0], [4.0, -1.0]]).unwrap();
        let b = FeatureMatrix::new(ndarray::array![[4.0, -1.0], [1.0, 2.0], [1.0, 2.0]]).unwrap();
        let ga = build_brain_graph("a", &a, None).unwrap();
        let gb = build_brain_graph("b", &b, None).unwrap();
        assert_eq!(ga.feats.row(3), gb.feats.row(3));
    }

    #[test]
    fn zero_input_zero_global_row() {
        let g = build_brain_graph("z", &FeatureMatrix::zeros(N_ROIS, 5), None).unwrap();
        assert!(g.feats.row(N_ROIS).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn label_parsing() {
        assert_eq!("1".parse::<Label>().unwrap(), Label::Asd);
        assert_eq!("2".parse::<Label>().unwrap(), Label::Control);
        assert_eq!(" Control ".parse::<Label>().unwrap(), Label::Control);
        assert_eq!("ASD".parse::<Label>().unwrap(), Label::Asd);
        assert!("maybe".parse::<Label>().is_err());
        assert_eq!(Label::Asd.to_string().parse::<Label>().unwrap(), Label::Asd);
    }
}
