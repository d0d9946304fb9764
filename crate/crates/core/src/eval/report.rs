use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::frequency::{cumulative_auc_curve, slice_tail_torso_head, CurvePoint, Dimension, FrequencyIndex, ScoredImpression, Stratum};
use super::metrics::{auc, calibration, calibration_gain, combine_average, relative_auc_improvement};
use crate::error::{Error, Result};
use crate::text::Device;

/// Default cumulative-curve edges. The last one exceeds every normalised
/// frequency, so its point covers all impressions.
pub const DEFAULT_CURVE_EDGES: [f64; 8] = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 2.0];

const UNDEFINED: &str = "undefined";

/// Serialises `None` as the string `"undefined"`.
pub(crate) mod undefined {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => x.serialize(s),
            None => s.serialize_str(super::UNDEFINED),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(Some(x)),
            Raw::Str(s) if s == super::UNDEFINED => Ok(None),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("expected number or `undefined`, got `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub impressions: usize,
    pub clicks: usize,
    #[serde(with = "undefined")]
    pub auc: Option<f64>,
    #[serde(with = "undefined")]
    pub calibration: Option<f64>,
}

impl Metrics {
    pub fn compute(scores: &[f64], clicks: &[f64]) -> Self {
        Metrics {
            impressions: scores.len(),
            clicks: clicks.iter().filter(|&&c| c > 0.5).count(),
            auc: auc(scores, clicks),
            calibration: calibration(scores, clicks),
        }
    }
}

/// The same metrics for the model, the external scorer and their average.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub model: Metrics,
    pub external: Option<Metrics>,
    pub combined: Option<Metrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceMetrics {
    pub device: Device,
    pub metrics: Scored,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceMetrics {
    pub dimension: Dimension,
    pub stratum: Stratum,
    pub metrics: Scored,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSeries {
    pub dimension: Dimension,
    pub points: Vec<CurvePoint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// Percent AUC change of the combined scorer over the external one.
    #[serde(with = "undefined")]
    pub relative_auc_improvement: Option<f64>,
    /// Calibration error removed by the combined scorer.
    #[serde(with = "undefined")]
    pub calibration_gain: Option<f64>,
    /// Calibration error removed by the model alone.
    #[serde(with = "undefined")]
    pub model_calibration_gain: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: Scored,
    pub comparison: Option<Comparison>,
    pub devices: Vec<DeviceMetrics>,
    pub slices: Vec<SliceMetrics>,
    pub curves: Vec<CurveSeries>,
}

struct Columns {
    model: Vec<f64>,
    external: Option<Vec<f64>>,
    combined: Option<Vec<f64>>,
    clicks: Vec<f64>,
}

impl Columns {
    fn scored(&self, sel: &[usize]) -> Scored {
        let pick = |v: &[f64]| sel.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        let c = pick(&self.clicks);
        Scored {
            model: Metrics::compute(&pick(&self.model), &c),
            external: self.external.as_deref().map(|e| Metrics::compute(&pick(e), &c)),
            combined: self.combined.as_deref().map(|e| Metrics::compute(&pick(e), &c)),
        }
    }
}

/// Assembles every metric over the impressions. External scores, if given,
/// align with `imps` and enable the external, combined and comparison parts.
pub fn make_report(
    imps: &[ScoredImpression],
    index: &FrequencyIndex,
    external: Option<&[f64]>,
    edges: &[f64],
) -> Result<EvalReport> {
    if let Some(e) = external {
        if e.len() != imps.len() {
            return Err(Error::LengthMismatch(imps.len(), e.len()));
        }
    }
    let model: Vec<f64> = imps.iter().map(|i| i.score).collect();
    let combined = match external {
        Some(e) => Some(
            model
                .iter()
                .zip(e)
                .map(|(&m, &x)| combine_average(m, x))
                .collect::<Result<Vec<f64>>>()?,
        ),
        None => None,
    };
    let cols = Columns {
        model,
        external: external.map(<[f64]>::to_vec),
        combined,
        clicks: imps.iter().map(|i| f64::from(i.click)).collect(),
    };
    let all: Vec<usize> = (0..imps.len()).collect();
    let overall = cols.scored(&all);

    let comparison = match (overall.external, overall.combined) {
        (Some(ext), Some(comb)) => Some(Comparison {
            relative_auc_improvement: ext.auc.zip(comb.auc).and_then(|(e, c)| relative_auc_improvement(e, c)),
            calibration_gain: ext.calibration.zip(comb.calibration).and_then(|(e, c)| calibration_gain(e, c)),
            model_calibration_gain: ext
                .calibration
                .zip(overall.model.calibration)
                .and_then(|(e, m)| calibration_gain(e, m)),
        }),
        _ => None,
    };

    let devices = [Device::Desktop, Device::Mobile, Device::Unknown]
        .into_iter()
        .filter_map(|d| {
            let sel: Vec<usize> = all.iter().copied().filter(|&i| imps[i].device == d).collect();
            (!sel.is_empty()).then(|| DeviceMetrics {
                device: d,
                metrics: cols.scored(&sel),
            })
        })
        .collect();

    let mut slices = Vec::new();
    let mut curves = Vec::new();
    for dim in Dimension::ALL {
        let s = slice_tail_torso_head(imps, index, dim);
        for stratum in Stratum::ALL {
            slices.push(SliceMetrics {
                dimension: dim,
                stratum,
                metrics: cols.scored(s.get(stratum)),
            });
        }
        curves.push(CurveSeries {
            dimension: dim,
            points: cumulative_auc_curve(imps, index, dim, edges),
        });
    }

    Ok(EvalReport {
        overall,
        comparison,
        devices,
        slices,
        curves,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:?}"),
        None => UNDEFINED.into(),
    }
}

fn metrics_cells(m: &Metrics) -> String {
    format!(
        "{}\t{}\t{}\t{}",
        m.impressions,
        m.clicks,
        fmt_opt(m.auc),
        fmt_opt(m.calibration)
    )
}

fn scored_rows(prefix: &str, s: &Scored, out: &mut String) {
    let rows = [("model", Some(&s.model)), ("external", s.external.as_ref()), ("combined", s.combined.as_ref())];
    for (name, m) in rows {
        if let Some(m) = m {
            let _ = writeln!(out, "{prefix}{name}\t{}", metrics_cells(m));
        }
    }
}

impl EvalReport {
    /// Blocks of tab-separated tables, each introduced by a `[name]` line.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        s.push_str("[overall]\nscorer\timpressions\tclicks\tauc\tcalibration\n");
        scored_rows("", &self.overall, &mut s);
        if let Some(c) = &self.comparison {
            s.push_str("\n[comparison]\nmetric\tvalue\n");
            let _ = writeln!(s, "relative_auc_improvement\t{}", fmt_opt(c.relative_auc_improvement));
            let _ = writeln!(s, "calibration_gain\t{}", fmt_opt(c.calibration_gain));
            let _ = writeln!(s, "model_calibration_gain\t{}", fmt_opt(c.model_calibration_gain));
        }
        s.push_str("\n[device]\ndevice\tscorer\timpressions\tclicks\tauc\tcalibration\n");
        for d in &self.devices {
            scored_rows(&format!("{}\t", d.device), &d.metrics, &mut s);
        }
        s.push_str("\n[slices]\ndimension\tstratum\tscorer\timpressions\tclicks\tauc\tcalibration\n");
        for sl in &self.slices {
            scored_rows(
                &format!("{}\t{}\t", sl.dimension.as_str(), sl.stratum.as_str()),
                &sl.metrics,
                &mut s,
            );
        }
        s.push_str("\n[cumulative]\ndimension\tnf_below\timpressions\tauc\n");
        for c in &self.curves {
            for p in &c.points {
                let _ = writeln!(
                    s,
                    "{}\t{:?}\t{}\t{}",
                    c.dimension.as_str(),
                    p.nf_below,
                    p.impressions,
                    fmt_opt(p.auc)
                );
            }
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write(&self, tsv: &Path, json: &Path) -> Result<()> {
        std::fs::write(tsv, self.to_tsv())?;
        std::fs::write(json, self.to_json()?)?;
        Ok(())
    }

    /// Parses the output of [`EvalReport::to_tsv`].
    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut p = TsvParser::default();
        for (n, line) in text.lines().enumerate() {
            p.line(n + 1, line)?;
        }
        p.finish()
    }
}

#[derive(Default)]
struct TsvParser {
    section: String,
    header_seen: bool,
    overall: Vec<(String, Metrics)>,
    comparison: Option<Comparison>,
    devices: Vec<(Device, String, Metrics)>,
    slices: Vec<(Dimension, Stratum, String, Metrics)>,
    curves: Vec<(Dimension, CurvePoint)>,
}

fn bad(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: "<report>".into(),
        line,
        msg: msg.into(),
    }
}

fn parse_opt(line: usize, s: &str) -> Result<Option<f64>> {
    if s == UNDEFINED {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| bad(line, format!("bad number `{s}`")))
}

fn parse_usize(line: usize, s: &str) -> Result<usize> {
    s.parse().map_err(|_| bad(line, format!("bad count `{s}`")))
}

fn parse_metrics(line: usize, f: &[&str]) -> Result<Metrics> {
    Ok(Metrics {
        impressions: parse_usize(line, f[0])?,
        clicks: parse_usize(line, f[1])?,
        auc: parse_opt(line, f[2])?,
        calibration: parse_opt(line, f[3])?,
    })
}

fn group(rows: Vec<(String, Metrics)>, line: usize) -> Result<Scored> {
    let mut s = Scored {
        model: Metrics {
            impressions: 0,
            clicks: 0,
            auc: None,
            calibration: None,
        },
        external: None,
        combined: None,
    };
    let mut has_model = false;
    for (name, m) in rows {
        match name.as_str() {
            "model" => {
                s.model = m;
                has_model = true;
            }
            "external" => s.external = Some(m),
            "combined" => s.combined = Some(m),
            other => return Err(bad(line, format!("unknown scorer `{other}`"))),
        }
    }
    if !has_model {
        return Err(bad(line, "missing model row"));
    }
    Ok(s)
}

impl TsvParser {
    fn line(&mut self, n: usize, line: &str) -> Result<()> {
        if line.is_empty() {
            return Ok(());
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            self.section = name.to_string();
            self.header_seen = false;
            if name == "comparison" {
                self.comparison = Some(Comparison {
                    relative_auc_improvement: None,
                    calibration_gain: None,
                    model_calibration_gain: None,
                });
            }
            return Ok(());
        }
        if !self.header_seen {
            self.header_seen = true;
            return Ok(());
        }
        let f: Vec<&str> = line.split('\t').collect();
        let want = match self.section.as_str() {
            "overall" => 5,
            "comparison" => 2,
            "device" => 6,
            "slices" => 7,
            "cumulative" => 4,
            other => return Err(bad(n, format!("unknown section `{other}`"))),
        };
        if f.len() != want {
            return Err(bad(n, format!("expected {want} fields, got {}", f.len())));
        }
        match self.section.as_str() {
            "overall" => self.overall.push((f[0].into(), parse_metrics(n, &f[1..])?)),
            "comparison" => {
                let v = parse_opt(n, f[1])?;
                let c = self.comparison.as_mut().unwrap();
                match f[0] {
                    "relative_auc_improvement" => c.relative_auc_improvement = v,
                    "calibration_gain" => c.calibration_gain = v,
                    "model_calibration_gain" => c.model_calibration_gain = v,
                    other => return Err(bad(n, format!("unknown metric `{other}`"))),
                }
            }
            "device" => {
                let d = Device::parse(f[0]).ok_or_else(|| bad(n, format!("bad device `{}`", f[0])))?;
                self.devices.push((d, f[1].into(), parse_metrics(n, &f[2..])?));
            }
            "slices" => {
                let d = Dimension::parse(f[0]).ok_or_else(|| bad(n, format!("bad dimension `{}`", f[0])))?;
                let s = Stratum::parse(f[1]).ok_or_else(|| bad(n, format!("bad stratum `{}`", f[1])))?;
                self.slices.push((d, s, f[2].into(), parse_metrics(n, &f[3..])?));
            }
            _ => {
                let d = Dimension::parse(f[0]).ok_or_else(|| bad(n, format!("bad dimension `{}`", f[0])))?;
                self.curves.push((
                    d,
                    CurvePoint {
                        nf_below: f[1].parse().map_err(|_| bad(n, "bad edge"))?,
                        impressions: parse_usize(n, f[2])?,
                        auc: parse_opt(n, f[3])?,
                    },
                ));
            }
        }
        Ok(())
    }

    fn finish(self) -> Result<EvalReport> {
        let overall = group(self.overall, 0)?;
        let mut devices: Vec<DeviceMetrics> = Vec::new();
        let mut rows: Vec<(String, Metrics)> = Vec::new();
        let mut current: Option<Device> = None;
        for (d, name, m) in self.devices {
            if current != Some(d) {
                if let Some(prev) = current {
                    devices.push(DeviceMetrics {
                        device: prev,
                        metrics: group(std::mem::take(&mut rows), 0)?,
                    });
                }
                current = Some(d);
            }
            rows.push((name, m));
        }
        if let Some(prev) = current {
            devices.push(DeviceMetrics {
                device: prev,
                metrics: group(rows, 0)?,
            });
        }
        let mut slices: Vec<SliceMetrics> = Vec::new();
        let mut rows: Vec<(String, Metrics)> = Vec::new();
        let mut current: Option<(Dimension, Stratum)> = None;
        for (d, s, name, m) in self.slices {
            if current != Some((d, s)) {
                if let Some((pd, ps)) = current {
                    slices.push(SliceMetrics {
                        dimension: pd,
                        stratum: ps,
                        metrics: group(std::mem::take(&mut rows), 0)?,
                    });
                }
                current = Some((d, s));
            }
            rows.push((name, m));
        }
        if let Some((pd, ps)) = current {
            slices.push(SliceMetrics {
                dimension: pd,
                stratum: ps,
                metrics: group(rows, 0)?,
            });
        }
        let mut curves: Vec<CurveSeries> = Vec::new();
        for (d, p) in self.curves {
            match curves.last_mut() {
                Some(c) if c.dimension == d => c.points.push(p),
                _ => curves.push(CurveSeries {
                    dimension: d,
                    points: vec![p],
                }),
            }
        }
        Ok(EvalReport {
            overall,
            comparison: self.comparison,
            devices,
            slices,
            curves,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::SeededRng;
    use rand::{Rng, SeedableRng};

    fn sample(n: usize, seed: u64) -> (Vec<ScoredImpression>, FrequencyIndex, Vec<f64>) {
        let mut rng = SeededRng::seed_from_u64(seed);
        let mut idx = FrequencyIndex::new();
        let mut imps = Vec::new();
        let mut ext = Vec::new();
        for _ in 0..n {
            let q = format!("q{}", rng.random_range(0..50));
            let a = format!("a{}", rng.random_range(0..20));
            idx.observe(&q, &a);
            let p: f64 = rng.random_range(0.05..0.6);
            imps.push(ScoredImpression {
                score: p,
                click: u8::from(rng.random_bool(p)),
                query_key: q,
                ad_key: a,
                device: if rng.random_bool(0.5) { Device::Desktop } else { Device::Mobile },
            });
            ext.push((p + rng.random_range(-0.05..0.05)).clamp(0.0, 1.0));
        }
        (imps, idx, ext)
    }

    #[test]
    fn combined_equal_to_external_is_zero_improvement() {
        let (imps, idx, _) = sample(400, 1);
        let same: Vec<f64> = imps.iter().map(|i| i.score).collect();
        let r = make_report(&imps, &idx, Some(&same), &DEFAULT_CURVE_EDGES).unwrap();
        assert_eq!(r.comparison.unwrap().relative_auc_improvement, Some(0.0));
    }

    #[test]
    fn totals_reconcile() {
        let (imps, idx, ext) = sample(500, 2);
        let r = make_report(&imps, &idx, Some(&ext), &DEFAULT_CURVE_EDGES).unwrap();
        for dim in Dimension::ALL {
            let n: usize = r
                .slices
                .iter()
                .filter(|s| s.dimension == dim)
                .map(|s| s.metrics.model.impressions)
                .sum();
            let c: usize = r
                .slices
                .iter()
                .filter(|s| s.dimension == dim)
                .map(|s| s.metrics.model.clicks)
                .sum();
            assert_eq!(n, r.overall.model.impressions);
            assert_eq!(c, r.overall.model.clicks);
        }
        let n: usize = r.devices.iter().map(|d| d.metrics.model.impressions).sum();
        assert_eq!(n, imps.len());
    }

    #[test]
    fn device_metrics_use_filtered_subset() {
        let (imps, idx, _) = sample(300, 3);
        let r = make_report(&imps, &idx, None, &DEFAULT_CURVE_EDGES).unwrap();
        for d in &r.devices {
            let sel: Vec<&ScoredImpression> = imps.iter().filter(|i| i.device == d.device).collect();
            let s: Vec<f64> = sel.iter().map(|i| i.score).collect();
            let c: Vec<f64> = sel.iter().map(|i| f64::from(i.click)).collect();
            assert_eq!(d.metrics.model.auc, auc(&s, &c));
            assert_eq!(d.metrics.model.impressions, sel.len());
        }
        assert!(r.comparison.is_none());
        assert!(r.overall.external.is_none());
    }

    #[test]
    fn tsv_and_json_round_trip() {
        let (imps, idx, ext) = sample(200, 4);
        for external in [None, Some(ext.as_slice())] {
            let r = make_report(&imps, &idx, external, &DEFAULT_CURVE_EDGES).unwrap();
            assert_eq!(EvalReport::from_tsv(&r.to_tsv()).unwrap(), r);
            assert_eq!(EvalReport::from_json(&r.to_json().unwrap()).unwrap(), r);
        }
    }

    #[test]
    fn undefined_metrics_are_marked() {
        let imps = vec![ScoredImpression {
            score: 0.3,
            click: 0,
            query_key: "q".into(),
            ad_key: "a".into(),
            device: Device::Unknown,
        }];
        let idx = FrequencyIndex::from_records(std::iter::empty());
        let r = make_report(&imps, &idx, None, &DEFAULT_CURVE_EDGES).unwrap();
        assert_eq!(r.overall.model.auc, None);
        assert!(r.to_tsv().contains("model\t1\t0\tundefined\tundefined"));
        assert!(r.to_json().unwrap().contains("\"undefined\""));
    }
}
