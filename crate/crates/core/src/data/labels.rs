//! Acuity phenotype and the ten outcome labels of a prediction window.

use serde::{Deserialize, Serialize};

use super::record::{Therapy, TherapyFlags};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcuityState {
    Stable,
    Unstable,
}

/// Unstable iff any of MV, VP, BT or CRRT is active at any time in the window.
pub fn acuity_state(flags: TherapyFlags) -> AcuityState {
    if flags.0.iter().any(|&f| f) {
        AcuityState::Unstable
    } else {
        AcuityState::Stable
    }
}

/// The ten classification heads, in output order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    StableToUnstable,
    UnstableToStable,
    MvToNoMv,
    NoMvToMv,
    VpToNoVp,
    NoVpToVp,
    Discharge,
    Stable,
    Unstable,
    Deceased,
}

pub const N_HEADS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskFamily {
    Transition,
    Status,
}

impl Head {
    pub const ALL: [Head; N_HEADS] = [
        Head::StableToUnstable,
        Head::UnstableToStable,
        Head::MvToNoMv,
        Head::NoMvToMv,
        Head::VpToNoVp,
        Head::NoVpToVp,
        Head::Discharge,
        Head::Stable,
        Head::Unstable,
        Head::Deceased,
    ];

    /// Heads used for checkpoint selection.
    pub const CRITICAL: [Head; 3] = [Head::StableToUnstable, Head::NoMvToMv, Head::NoVpToVp];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn family(self) -> TaskFamily {
        if self.index() < 6 {
            TaskFamily::Transition
        } else {
            TaskFamily::Status
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Head::StableToUnstable => "stable_to_unstable",
            Head::UnstableToStable => "unstable_to_stable",
            Head::MvToNoMv => "mv_to_no_mv",
            Head::NoMvToMv => "no_mv_to_mv",
            Head::VpToNoVp => "vp_to_no_vp",
            Head::NoVpToVp => "no_vp_to_vp",
            Head::Discharge => "discharge",
            Head::Stable => "stable",
            Head::Unstable => "unstable",
            Head::Deceased => "deceased",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Head::StableToUnstable => "Stable-Unstable",
            Head::UnstableToStable => "Unstable-Stable",
            Head::MvToNoMv => "MV-No MV",
            Head::NoMvToMv => "No MV-MV",
            Head::VpToNoVp => "VP-No VP",
            Head::NoVpToVp => "No VP-VP",
            Head::Discharge => "Discharge",
            Head::Stable => "Stable",
            Head::Unstable => "Unstable",
            Head::Deceased => "Deceased",
        }
    }

    pub fn from_name(s: &str) -> Option<Head> {
        Head::ALL.into_iter().find(|h| h.name() == s)
    }

    pub fn in_family(family: TaskFamily) -> impl Iterator<Item = Head> {
        Head::ALL.into_iter().filter(move |h| h.family() == family)
    }
}

/// Ten optional binary labels; `None` means undefined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelSet(pub [Option<bool>; N_HEADS]);

impl LabelSet {
    pub const UNDEFINED: LabelSet = LabelSet([None; N_HEADS]);

    pub fn get(&self, h: Head) -> Option<bool> {
        self.0[h.index()]
    }

    pub fn set(&mut self, h: Head, v: bool) {
        self.0[h.index()] = Some(v);
    }

    pub fn is_defined(&self, h: Head) -> bool {
        self.0[h.index()].is_some()
    }

    pub fn any_defined(&self) -> bool {
        self.0.iter().any(Option::is_some)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalEvent {
    Discharge,
    Death,
}

/// Where the prediction window sits relative to the end of the stay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionWindow {
    /// Wholly inside the stay, with therapies over that window.
    InStay(TherapyFlags),
    /// The stay ends inside the window with this event.
    Terminal(TerminalEvent),
    /// Starts after the stay ended.
    AfterStay,
}

/// Labels for one observation window given its own therapies and what happens next.
///
/// Transitions compare the observation window's state with the prediction
/// window's. A terminal event leaves transitions undefined and sets the
/// matching status. Status heads are mutually exclusive.
pub fn make_labels(observed: TherapyFlags, next: PredictionWindow) -> LabelSet {
    let mut labels = LabelSet::UNDEFINED;
    match next {
        PredictionWindow::AfterStay => {}
        PredictionWindow::Terminal(event) => {
            labels.set(Head::Discharge, event == TerminalEvent::Discharge);
            labels.set(Head::Deceased, event == TerminalEvent::Death);
            labels.set(Head::Stable, false);
            labels.set(Head::Unstable, false);
        }
        PredictionWindow::InStay(pred) => {
            let from = acuity_state(observed);
            let to = acuity_state(pred);
            use AcuityState::*;
            labels.set(Head::StableToUnstable, from == Stable && to == Unstable);
            labels.set(Head::UnstableToStable, from == Unstable && to == Stable);
            let mv = (observed.has(Therapy::Mv), pred.has(Therapy::Mv));
            let vp = (observed.has(Therapy::Vp), pred.has(Therapy::Vp));
            labels.set(Head::MvToNoMv, mv == (true, false));
            labels.set(Head::NoMvToMv, mv == (false, true));
            labels.set(Head::VpToNoVp, vp == (true, false));
            labels.set(Head::NoVpToVp, vp == (false, true));
            labels.set(Head::Discharge, false);
            labels.set(Head::Deceased, false);
            labels.set(Head::Stable, to == Stable);
            labels.set(Head::Unstable, to == Unstable);
        }
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;

    const MV: u8 = 1;
    const VP: u8 = 2;
    const BT: u8 = 4;

    #[test]
    fn any_therapy_is_unstable() {
        assert_eq!(acuity_state(TherapyFlags::default()), AcuityState::Stable);
        assert_eq!(acuity_state(TherapyFlags::from_bits(BT)), AcuityState::Unstable);
        assert_eq!(acuity_state(TherapyFlags::from_bits(MV)), AcuityState::Unstable);
    }

    #[test]
    fn stable_to_unstable() {
        let l = make_labels(
            TherapyFlags::default(),
            PredictionWindow::InStay(TherapyFlags::from_bits(VP)),
        );
        assert_eq!(l.get(Head::StableToUnstable), Some(true));
        assert_eq!(l.get(Head::Unstable), Some(true));
        assert_eq!(l.get(Head::Stable), Some(false));
    }

    #[test]
    fn mv_weaned_while_still_on_vasopressors() {
        let l = make_labels(
            TherapyFlags::from_bits(MV | VP),
            PredictionWindow::InStay(TherapyFlags::from_bits(VP)),
        );
        assert_eq!(l.get(Head::MvToNoMv), Some(true));
        assert_eq!(l.get(Head::UnstableToStable), Some(false));
        assert_eq!(l.get(Head::Unstable), Some(true));
        assert_eq!(l.get(Head::VpToNoVp), Some(false));
    }

    #[test]
    fn death_sets_only_deceased() {
        let l = make_labels(
            TherapyFlags::from_bits(MV),
            PredictionWindow::Terminal(TerminalEvent::Death),
        );
        assert_eq!(l.get(Head::Deceased), Some(true));
        for h in [Head::Discharge, Head::Stable, Head::Unstable] {
            assert_eq!(l.get(h), Some(false));
        }
        for h in Head::in_family(TaskFamily::Transition) {
            assert_eq!(l.get(h), None);
        }
    }

    #[test]
    fn after_stay_is_all_undefined() {
        let l = make_labels(TherapyFlags::default(), PredictionWindow::AfterStay);
        assert!(!l.any_defined());
    }

    #[test]
    fn head_names_round_trip() {
        for h in Head::ALL {
            assert_eq!(Head::from_name(h.name()), Some(h));
        }
        assert_eq!(Head::CRITICAL.map(|h| h.index()), [0, 3, 5]);
    }
}
