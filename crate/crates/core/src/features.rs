//! Feature assembly: regroups preprocessed streams into the two modelling
//! layouts without altering any value.
//!
//! The implicit-correlation layout (`4x4D`) keeps each wrist's gravity and
//! body series separate as four 4-dimensional features `(t, x, y, z)`. The
//! explicit-correlation layout (`2x7D`) concatenates left and right into two
//! 7-dimensional features `G` and `B`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::SampleStream;

/// Modelling layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Approach {
    #[serde(rename = "4x4d")]
    FourX4D,
    #[serde(rename = "2x7d")]
    TwoX7D,
}

impl Approach {
    pub fn feature_ids(&self) -> &'static [FeatureId] {
        match self {
            Approach::FourX4D => &[
                FeatureId::GravityLeft,
                FeatureId::BodyLeft,
                FeatureId::GravityRight,
                FeatureId::BodyRight,
            ],
            Approach::TwoX7D => &[FeatureId::Gravity, FeatureId::Body],
        }
    }

    pub fn feature_count(&self) -> usize {
        self.feature_ids().len()
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Approach::FourX4D => "4x4d",
            Approach::TwoX7D => "2x7d",
        }
    }
}

impl std::str::FromStr for Approach {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "4x4d" => Ok(Approach::FourX4D),
            "2x7d" => Ok(Approach::TwoX7D),
            other => Err(Error::Parameter(format!(
                "unknown approach {other:?}, expected 4x4d or 2x7d"
            ))),
        }
    }
}

impl std::fmt::Display for Approach {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Identity of one modelled feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureId {
    #[serde(rename = "g_l")]
    GravityLeft,
    #[serde(rename = "b_l")]
    BodyLeft,
    #[serde(rename = "g_r")]
    GravityRight,
    #[serde(rename = "b_r")]
    BodyRight,
    #[serde(rename = "G")]
    Gravity,
    #[serde(rename = "B")]
    Body,
}

impl FeatureId {
    /// Full point dimension `n` (time plus acceleration components).
    pub fn dimension(&self) -> usize {
        match self {
            FeatureId::Gravity | FeatureId::Body => 7,
            _ => 4,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureId::GravityLeft => "g_l",
            FeatureId::BodyLeft => "b_l",
            FeatureId::GravityRight => "g_r",
            FeatureId::BodyRight => "b_r",
            FeatureId::Gravity => "G",
            FeatureId::Body => "B",
        }
    }
}

impl std::fmt::Display for FeatureId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One feature as a time-indexed sequence of acceleration vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSeries {
    pub feature_id: FeatureId,
    /// Shared time grid `f_t,k`, seconds.
    pub times: Vec<f64>,
    /// Acceleration parts `f_a,k`, each of dimension `n - 1`.
    pub values: Vec<DVector<f64>>,
}

impl FeatureSeries {
    pub fn new(feature_id: FeatureId, times: Vec<f64>, values: Vec<DVector<f64>>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::Alignment(format!(
                "feature {feature_id}: {} timestamps vs {} values",
                times.len(),
                values.len()
            )));
        }
        let want = feature_id.dimension() - 1;
        if let Some(v) = values.iter().find(|v| v.len() != want) {
            return Err(Error::Alignment(format!(
                "feature {feature_id}: value dimension {} does not match n-1 = {want}",
                v.len()
            )));
        }
        Ok(FeatureSeries {
            feature_id,
            times,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Full data points `(f_t,k, f_a,k)` as n-vectors, for mixture fitting.
    pub fn full_points(&self) -> Vec<DVector<f64>> {
        self.times
            .iter()
            .zip(self.values.iter())
            .map(|(&t, a)| {
                let mut v = DVector::zeros(a.len() + 1);
                v[0] = t;
                v.rows_mut(1, a.len()).copy_from(a);
                v
            })
            .collect()
    }
}

/// The 4 or 2 feature series of one trial or window.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub approach: Approach,
    pub series: Vec<FeatureSeries>,
}

impl FeatureSet {
    pub fn series_for(&self, id: FeatureId) -> Option<&FeatureSeries> {
        self.series.iter().find(|s| s.feature_id == id)
    }
}

fn check_grids(streams: [&SampleStream; 4]) -> Result<Vec<f64>> {
    let base = streams[0].timestamps();
    for s in &streams[1..] {
        let ts = s.timestamps();
        if ts.len() != base.len()
            || ts
                .iter()
                .zip(base.iter())
                .any(|(a, b)| (a - b).abs() > 1e-9)
        {
            return Err(Error::Alignment(
                "input streams do not share one time grid".into(),
            ));
        }
    }
    Ok(base)
}

fn axis_vector(stream: &SampleStream, k: usize) -> DVector<f64> {
    DVector::from_column_slice(&stream.samples()[k].a)
}

fn joined_vector(a: &SampleStream, b: &SampleStream, k: usize) -> DVector<f64> {
    let mut v = DVector::zeros(6);
    v.rows_mut(0, 3)
        .copy_from(&DVector::from_column_slice(&a.samples()[k].a));
    v.rows_mut(3, 3)
        .copy_from(&DVector::from_column_slice(&b.samples()[k].a));
    v
}

/// Implicit-correlation layout: four independent 4-dimensional features.
pub fn build_4x4d(
    gravity_l: &SampleStream,
    body_l: &SampleStream,
    gravity_r: &SampleStream,
    body_r: &SampleStream,
) -> Result<FeatureSet> {
    let times = check_grids([gravity_l, body_l, gravity_r, body_r])?;
    let n = times.len();
    let mk = |id: FeatureId, src: &SampleStream| {
        FeatureSeries::new(
            id,
            times.clone(),
            (0..n).map(|k| axis_vector(src, k)).collect(),
        )
    };
    Ok(FeatureSet {
        approach: Approach::FourX4D,
        series: vec![
            mk(FeatureId::GravityLeft, gravity_l)?,
            mk(FeatureId::BodyLeft, body_l)?,
            mk(FeatureId::GravityRight, gravity_r)?,
            mk(FeatureId::BodyRight, body_r)?,
        ],
    })
}

/// Explicit-correlation layout: joint left+right gravity `G` and body `B`.
pub fn build_2x7d(
    gravity_l: &SampleStream,
    body_l: &SampleStream,
    gravity_r: &SampleStream,
    body_r: &SampleStream,
) -> Result<FeatureSet> {
    let times = check_grids([gravity_l, body_l, gravity_r, body_r])?;
    let n = times.len();
    let gravity = FeatureSeries::new(
        FeatureId::Gravity,
        times.clone(),
        (0..n).map(|k| joined_vector(gravity_l, gravity_r, k)).collect(),
    )?;
    let body = FeatureSeries::new(
        FeatureId::Body,
        times.clone(),
        (0..n).map(|k| joined_vector(body_l, body_r, k)).collect(),
    )?;
    Ok(FeatureSet {
        approach: Approach::TwoX7D,
        series: vec![gravity, body],
    })
}

/// Splits a 2x7D set back into the corresponding 4x4D series.
pub fn project_to_4x4d(set: &FeatureSet) -> Result<FeatureSet> {
    if set.approach != Approach::TwoX7D {
        return Err(Error::Parameter("projection expects a 2x7d set".into()));
    }
    let gravity = set
        .series_for(FeatureId::Gravity)
        .ok_or_else(|| Error::Parameter("missing G series".into()))?;
    let body = set
        .series_for(FeatureId::Body)
        .ok_or_else(|| Error::Parameter("missing B series".into()))?;
    let half = |src: &FeatureSeries, id: FeatureId, offset: usize| {
        FeatureSeries::new(
            id,
            src.times.clone(),
            src.values
                .iter()
                .map(|v| DVector::from(v.rows(offset, 3).clone_owned()))
                .collect(),
        )
    };
    Ok(FeatureSet {
        approach: Approach::FourX4D,
        series: vec![
            half(gravity, FeatureId::GravityLeft, 0)?,
            half(body, FeatureId::BodyLeft, 0)?,
            half(gravity, FeatureId::GravityRight, 3)?,
            half(body, FeatureId::BodyRight, 3)?,
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{Side, TriaxSample};

    fn stream(side: Side, rows: &[[f64; 3]]) -> SampleStream {
        let samples = rows
            .iter()
            .enumerate()
            .map(|(i, a)| TriaxSample::new(i as f64 / 40.0, *a))
            .collect();
        SampleStream::new(side, samples).unwrap()
    }

    fn four_streams(n: usize) -> [SampleStream; 4] {
        let rows = |scale: f64| -> Vec<[f64; 3]> {
            (0..n)
                .map(|i| {
                    let x = (i % 40) as f64 * 0.1;
                    [scale * x, scale * x + 1.0, scale * x + 2.0]
                })
                .collect()
        };
        [
            stream(Side::Left, &rows(1.0)),
            stream(Side::Left, &rows(0.1)),
            stream(Side::Right, &rows(2.0)),
            stream(Side::Right, &rows(0.2)),
        ]
    }

    #[test]
    fn build_4x4d_shapes() {
        let [gl, bl, gr, br] = four_streams(2);
        let set = build_4x4d(&gl, &bl, &gr, &br).unwrap();
        assert_eq!(set.series.len(), 4);
        for s in &set.series {
            assert_eq!(s.len(), 2);
            assert_eq!(s.values[0].len(), 3);
            assert_eq!(s.feature_id.dimension(), 4);
        }
    }

    #[test]
    fn build_4x4d_zero_body_passthrough() {
        let n = 5;
        let zero = vec![[0.0, 0.0, 0.0]; n];
        let g = vec![[0.0, 0.0, 9.81]; n];
        let set = build_4x4d(
            &stream(Side::Left, &g),
            &stream(Side::Left, &zero),
            &stream(Side::Right, &g),
            &stream(Side::Right, &zero),
        )
        .unwrap();
        for id in [FeatureId::BodyLeft, FeatureId::BodyRight] {
            let s = set.series_for(id).unwrap();
            assert!(s.values.iter().all(|v| v.iter().all(|&x| x == 0.0)));
        }
    }

    #[test]
    fn mismatched_grids_error() {
        let [gl, bl, gr, _] = four_streams(4);
        let [.., br] = four_streams(5);
        assert!(matches!(
            build_4x4d(&gl, &bl, &gr, &br).unwrap_err(),
            Error::Alignment(_)
        ));
    }

    #[test]
    fn build_2x7d_concatenates_halves() {
        let [gl, bl, gr, br] = four_streams(100);
        let set = build_2x7d(&gl, &bl, &gr, &br).unwrap();
        assert_eq!(set.series.len(), 2);
        let g = set.series_for(FeatureId::Gravity).unwrap();
        assert_eq!(g.len(), 100);
        assert_eq!(g.values[0].len(), 6);
        for (k, v) in g.values.iter().enumerate() {
            for i in 0..3 {
                assert_eq!(v[i], gl.samples()[k].a[i]);
                assert_eq!(v[3 + i], gr.samples()[k].a[i]);
            }
        }
    }

    #[test]
    fn projection_roundtrip_is_exact() {
        let [gl, bl, gr, br] = four_streams(30);
        let direct = build_4x4d(&gl, &bl, &gr, &br).unwrap();
        let joint = build_2x7d(&gl, &bl, &gr, &br).unwrap();
        let projected = project_to_4x4d(&joint).unwrap();
        assert_eq!(direct, projected);
    }
}
