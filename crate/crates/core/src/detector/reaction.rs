//! Latency from a contact-threshold crossing to the detector's flip.

use std::io::Write;

use super::{DecisionEvent, DetectorState};
use crate::error::{HodError, Result};
use crate::sim::{Label, SampleSeries};

/// Longest wait for a flip before a crossing counts as missed, seconds.
pub const REACTION_TIMEOUT: f64 = 10.0;

pub const EVENTS_CSV_HEADER: &str = "index,time_s,event,latency_ms";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReactionRecord {
    /// Hands-on for a rising crossing, hands-off for a falling one.
    pub kind: Label,
    pub stimulus_index: usize,
    /// `None` when the detector did not follow within the timeout or before
    /// the next crossing.
    pub decision_index: Option<usize>,
    /// Seconds.
    pub latency: Option<f64>,
}

/// Indices where `values` rise above or fall back to `threshold`, starting
/// from the below-threshold state.
pub fn contact_crossings(values: &[f64], threshold: f64) -> Vec<(usize, Label)> {
    let mut state = Label::HandsOff;
    let mut out = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        let now = Label::from_on(v > threshold);
        if now != state {
            out.push((i, now));
            state = now;
        }
    }
    out
}

/// Online pairing of threshold crossings with detector flips.
///
/// Feed every sample with the decision the detector holds after it and the
/// flip it emitted, if any. A crossing is answered by the first flip into
/// the crossed-into state at or after it; a detector already in that state
/// scores zero latency. The next crossing or [`REACTION_TIMEOUT`] ends the
/// wait.
#[derive(Debug, Clone)]
pub struct ReactionTracker {
    threshold: f64,
    sample_period: f64,
    timeout: usize,
    above: bool,
    pending: Option<(usize, Label)>,
}

impl ReactionTracker {
    pub fn new(contact_threshold: f64, sample_period: f64) -> Result<Self> {
        if !contact_threshold.is_finite() {
            return Err(HodError::InvalidInput("contact threshold must be finite".into()));
        }
        if !(sample_period > 0.0 && sample_period.is_finite()) {
            return Err(HodError::InvalidInput("sample period must be positive".into()));
        }
        Ok(ReactionTracker {
            threshold: contact_threshold,
            sample_period,
            timeout: (REACTION_TIMEOUT / sample_period).round() as usize,
            above: false,
            pending: None,
        })
    }

    fn record(&self, stimulus: usize, kind: Label, decision: Option<usize>) -> ReactionRecord {
        ReactionRecord {
            kind,
            stimulus_index: stimulus,
            decision_index: decision,
            latency: decision.map(|d| (d - stimulus) as f64 * self.sample_period),
        }
    }

    /// Returns up to two records completed by this sample: a wait cut short
    /// and the new crossing answered immediately, or a flip answering the
    /// pending crossing.
    pub fn observe(
        &mut self,
        index: usize,
        value: f64,
        decision: Label,
        event: Option<DecisionEvent>,
    ) -> [Option<ReactionRecord>; 2] {
        let mut done = [None, None];
        if let Some((s, kind)) = self.pending {
            if index - s > self.timeout {
                done[0] = Some(self.record(s, kind, None));
                self.pending = None;
            }
        }
        let above = value > self.threshold;
        if above != self.above {
            self.above = above;
            let kind = Label::from_on(above);
            if let Some((s, k)) = self.pending.take() {
                done[0] = Some(self.record(s, k, None));
            }
            if decision == kind {
                done[1] = Some(self.record(index, kind, Some(index)));
            } else {
                self.pending = Some((index, kind));
            }
            return done;
        }
        if let (Some((s, kind)), Some(e)) = (self.pending, event) {
            if e.label == kind {
                done[1] = Some(self.record(s, kind, Some(index)));
                self.pending = None;
            }
        }
        done
    }

    /// Closes an unanswered crossing at end of stream.
    pub fn finish(&mut self) -> Option<ReactionRecord> {
        self.pending.take().map(|(s, k)| self.record(s, k, None))
    }
}

/// Streams `series` through `detector`, returning the reaction records and
/// every flip. Indices are relative to the start of `series`.
pub fn measure_reaction(
    series: &SampleSeries,
    detector: &mut DetectorState,
    contact_threshold: f64,
) -> Result<(Vec<ReactionRecord>, Vec<DecisionEvent>)> {
    let mut tracker = ReactionTracker::new(contact_threshold, series.sample_period)?;
    let mut records = Vec::new();
    let mut events = Vec::new();
    for (i, &v) in series.values.iter().enumerate() {
        let event = detector.push_sample(v)?.map(|e| DecisionEvent {
            index: i,
            label: e.label,
        });
        events.extend(event);
        records.extend(tracker.observe(i, v, detector.decision(), event).into_iter().flatten());
    }
    records.extend(tracker.finish());
    Ok((records, events))
}

/// Share of the step from the low to the high level at which contact is
/// assumed; the approach ramp stays below it.
pub const CONTACT_THRESHOLD_FRACTION: f64 = 0.25;

/// `CONTACT_THRESHOLD_FRACTION` of the way from the stream's low (5th
/// percentile) to its high (99.9th percentile) level.
pub fn default_contact_threshold(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let at = |q: f64| v[((v.len() - 1) as f64 * q).round() as usize];
    let (lo, hi) = (at(0.05), at(0.999));
    Some(lo + CONTACT_THRESHOLD_FRACTION * (hi - lo))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencySummary {
    pub count: usize,
    pub missed: usize,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

/// Statistics over the measured latencies of one event kind; `None` when no
/// crossing of that kind was followed by a flip.
pub fn latency_summary(records: &[ReactionRecord], kind: Label) -> Option<LatencySummary> {
    let of_kind = records.iter().filter(|r| r.kind == kind);
    let missed = of_kind.clone().filter(|r| r.latency.is_none()).count();
    let mut l: Vec<f64> = of_kind.filter_map(|r| r.latency).collect();
    if l.is_empty() {
        return None;
    }
    l.sort_by(f64::total_cmp);
    let n = l.len();
    let median = if n % 2 == 1 {
        l[n / 2]
    } else {
        0.5 * (l[n / 2 - 1] + l[n / 2])
    };
    Some(LatencySummary {
        count: n,
        missed,
        min: l[0],
        median,
        max: l[n - 1],
    })
}

/// One row per flip; the latency column is filled when a record points at it.
pub fn write_events_csv<W: Write>(
    events: &[DecisionEvent],
    records: &[ReactionRecord],
    sample_period: f64,
    mut out: W,
) -> Result<()> {
    writeln!(out, "{EVENTS_CSV_HEADER}")?;
    for e in events {
        let latency = records
            .iter()
            .find(|r| r.decision_index == Some(e.index) && r.kind == e.label)
            .and_then(|r| r.latency)
            .map(|l| format!("{:.3}", l * 1e3))
            .unwrap_or_default();
        writeln!(
            out,
            "{},{:.6},{},{}",
            e.index,
            e.index as f64 * sample_period,
            e.label,
            latency
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::DetectorConfig;
    use crate::model::{Model, ModelBody};
    use crate::nn::TdnnModel;
    use crate::preprocess::NormalizationSpec;
    use std::sync::Arc;

    fn constant_model(logit: f64) -> DetectorState {
        let mut m = TdnnModel::zeros(100, 1);
        m.output.biases[0] = logit;
        let model = Model::new(ModelBody::Tdnn(m), NormalizationSpec::absolute(0.0, 1.0).unwrap());
        DetectorState::new(Arc::new(model), DetectorConfig::default()).unwrap()
    }

    #[test]
    fn crossings_of_a_pulse() {
        let v = [0.0, 0.0, 2.0, 2.0, 0.5, 0.0];
        assert_eq!(
            contact_crossings(&v, 1.0),
            vec![(2, Label::HandsOn), (4, Label::HandsOff)]
        );
        assert!(contact_crossings(&[0.0; 10], 1.0).is_empty());
    }

    #[test]
    fn never_flipping_detector_times_out() {
        let mut v = vec![0.0; 500];
        v.extend(vec![5.0; 6000]);
        let series = SampleSeries::unlabeled(0.002, v);
        let mut d = constant_model(-10.0);
        let (records, events) = measure_reaction(&series, &mut d, 1.0).unwrap();
        assert!(events.is_empty());
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].latency, None);
        assert_eq!(latency_summary(&records, Label::HandsOn), None);
    }

    #[test]
    fn always_on_detector_latency() {
        // Warm-up fills at 99, the fifth agreeing window flips at 103.
        let mut v = vec![0.0; 50];
        v.extend(vec![5.0; 200]);
        v.extend(vec![0.0; 100]);
        let series = SampleSeries::unlabeled(0.002, v);
        let mut d = constant_model(10.0);
        let (records, events) = measure_reaction(&series, &mut d, 1.0).unwrap();
        assert_eq!(
            events,
            vec![DecisionEvent {
                index: 103,
                label: Label::HandsOn
            }]
        );
        assert_eq!(records[0].decision_index, Some(103));
        assert!((records[0].latency.unwrap() - 53.0 * 0.002).abs() < 1e-12);
        // Never flips off again.
        assert_eq!(records[1].kind, Label::HandsOff);
        assert_eq!(records[1].latency, None);
        for r in &records {
            if let Some(d) = r.decision_index {
                assert!(d >= r.stimulus_index);
            }
        }
        let mut csv = Vec::new();
        write_events_csv(&events, &records, 0.002, &mut csv).unwrap();
        assert_eq!(
            String::from_utf8(csv).unwrap(),
            "index,time_s,event,latency_ms\n103,0.206000,on,106.000\n"
        );
    }

    #[test]
    fn summary_statistics() {
        let rec = |kind, l: Option<f64>| ReactionRecord {
            kind,
            stimulus_index: 0,
            decision_index: l.map(|_| 0),
            latency: l,
        };
        let r = vec![
            rec(Label::HandsOn, Some(0.3)),
            rec(Label::HandsOn, Some(0.1)),
            rec(Label::HandsOn, None),
            rec(Label::HandsOn, Some(0.2)),
            rec(Label::HandsOff, Some(0.05)),
        ];
        let s = latency_summary(&r, Label::HandsOn).unwrap();
        assert_eq!((s.count, s.missed), (3, 1));
        assert_eq!((s.min, s.median, s.max), (0.1, 0.2, 0.3));
        assert_eq!(latency_summary(&r, Label::HandsOff).unwrap().median, 0.05);
    }
}
