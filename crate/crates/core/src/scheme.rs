//! Level-graph data model for one absorber class.
//!
//! A [`LevelScheme`] holds the levels (with their radiative decay and
//! branching), the optical drive fields connecting them, pure-dephasing
//! channels and the inhomogeneity model. Every drive field carries a
//! `shift_coefficient`: an absorber with ensemble variable `u ~ N(0, 1)`
//! sees that field's transition shifted by `shift_coefficient * u` MHz.
//! Perfectly correlated shifts (Doppler shifts of co- or counter-propagating
//! beams, shared strain) are therefore expressed by the relative sizes and
//! signs of the coefficients.
//!
//! The drive fields must form a spanning tree over the non-satellite levels
//! so that a rotating frame exists. A satellite level (an extra hyperfine
//! partner of a tree level) sits at a fixed splitting from its parent and is
//! driven through `side_couplings` of the fields that address the parent.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAX_LEVELS: usize = 6;
pub const PROBE_ID: &str = "probe";
pub const COUPLING_ID: &str = "coupling";
pub const RECOVERY_ID: &str = "recovery";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayBranch {
    pub target: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Satellite {
    pub parent: usize,
    /// Energy of this level above its parent, MHz.
    pub splitting: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Level {
    pub id: usize,
    pub label: String,
    /// Total population decay rate, MHz. The emission HWHM is half of this.
    pub population_decay_rate: f64,
    #[serde(default)]
    pub decay_branches: Vec<DecayBranch>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub satellite: Option<Satellite>,
}

impl Level {
    pub fn new(id: usize, label: &str, population_decay_rate: f64, branches: &[(usize, f64)]) -> Self {
        Level {
            id,
            label: label.to_string(),
            population_decay_rate,
            decay_branches: branches
                .iter()
                .map(|&(target, fraction)| DecayBranch { target, fraction })
                .collect(),
            satellite: None,
        }
    }

    pub fn stable(id: usize, label: &str) -> Self {
        Level::new(id, label, 0.0, &[])
    }

    /// Half width at half maximum of this level's emission line.
    pub fn hwhm(&self) -> f64 {
        0.5 * self.population_decay_rate
    }
}

/// Extra transition driven by a field onto a satellite level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SideCoupling {
    pub satellite: usize,
    /// Rabi frequency of the side transition relative to the main one.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveField {
    pub id: String,
    pub lower: usize,
    pub upper: usize,
    /// Rabi frequency, MHz; the Hamiltonian off-diagonal element is `rabi / 2`.
    pub rabi: f64,
    pub detuning: f64,
    pub shift_coefficient: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub side_couplings: Vec<SideCoupling>,
}

impl DriveField {
    pub fn new(id: &str, lower: usize, upper: usize, rabi: f64, detuning: f64, shift_coefficient: f64) -> Self {
        DriveField {
            id: id.to_string(),
            lower,
            upper,
            rabi,
            detuning,
            shift_coefficient,
            side_couplings: Vec::new(),
        }
    }
}

/// Pure dephasing of the coherence between `levels.0` and `levels.1`.
///
/// The energy of the second level fluctuates, so its coherences with every
/// other level decay at `rate`; populations are untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DephasingChannel {
    pub levels: (usize, usize),
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ShiftDistribution {
    #[default]
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InhomogeneityModel {
    /// Standard deviation of the primary (probe) shift distribution, MHz.
    pub sigma: f64,
    #[serde(default)]
    pub distribution: ShiftDistribution,
}

impl InhomogeneityModel {
    pub fn gaussian(sigma: f64) -> Self {
        InhomogeneityModel {
            sigma,
            distribution: ShiftDistribution::Gaussian,
        }
    }
}

/// One hop of the rotating-frame construction: `to` is reached from `from`
/// through `field`; `upward` is true when `to` is the field's upper level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct FrameStep {
    pub field: usize,
    pub from: usize,
    pub to: usize,
    pub upward: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScheme {
    levels: Vec<Level>,
    fields: Vec<DriveField>,
    #[serde(default)]
    dephasing: Vec<DephasingChannel>,
    inhom: InhomogeneityModel,
}

/// Validated level scheme. Immutable; modified copies are produced by the
/// `with_*` methods, which re-run validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScheme", into = "RawScheme")]
pub struct LevelScheme {
    levels: Vec<Level>,
    fields: Vec<DriveField>,
    dephasing: Vec<DephasingChannel>,
    inhom: InhomogeneityModel,
    probe: usize,
    frame: Vec<FrameStep>,
}

impl TryFrom<RawScheme> for LevelScheme {
    type Error = Error;
    fn try_from(raw: RawScheme) -> Result<Self> {
        build_scheme(raw.levels, raw.fields, raw.dephasing, raw.inhom)
    }
}

impl From<LevelScheme> for RawScheme {
    fn from(s: LevelScheme) -> Self {
        RawScheme {
            levels: s.levels,
            fields: s.fields,
            dephasing: s.dephasing,
            inhom: s.inhom,
        }
    }
}

fn finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPhysicalParams { name, value })
    }
}

/// Validate the parts and assemble a [`LevelScheme`].
pub fn build_scheme(
    levels: Vec<Level>,
    fields: Vec<DriveField>,
    dephasing: Vec<DephasingChannel>,
    inhom: InhomogeneityModel,
) -> Result<LevelScheme> {
    let n = levels.len();
    if n < 2 || n > MAX_LEVELS {
        return Err(Error::InvalidScheme(format!(
            "scheme needs between 2 and {MAX_LEVELS} levels, got {n}"
        )));
    }
    for (i, level) in levels.iter().enumerate() {
        if level.id != i {
            return Err(Error::InvalidScheme(format!(
                "level {:?} has id {} but sits at position {i}",
                level.label, level.id
            )));
        }
        finite("population_decay_rate", level.population_decay_rate)?;
        if level.population_decay_rate < 0.0 {
            return Err(Error::NonPhysicalParams {
                name: "population_decay_rate",
                value: level.population_decay_rate,
            });
        }
        validate_branches(level, n)?;
        if let Some(sat) = &level.satellite {
            finite("splitting", sat.splitting)?;
            if sat.parent >= n || sat.parent == i || levels[sat.parent].satellite.is_some() {
                return Err(Error::InvalidScheme(format!(
                    "satellite level {:?} needs a non-satellite parent",
                    level.label
                )));
            }
        }
    }

    let probes = fields.iter().filter(|f| f.id == PROBE_ID).count();
    if probes != 1 {
        return Err(Error::MissingProbe(probes));
    }
    for (i, f) in fields.iter().enumerate() {
        if fields[..i].iter().any(|g| g.id == f.id) {
            return Err(Error::InvalidScheme(format!("duplicate field id {:?}", f.id)));
        }
        if f.lower >= n || f.upper >= n || f.lower == f.upper {
            return Err(Error::InvalidScheme(format!(
                "field {:?} must connect two distinct existing levels",
                f.id
            )));
        }
        if levels[f.lower].satellite.is_some() || levels[f.upper].satellite.is_some() {
            return Err(Error::InvalidScheme(format!(
                "field {:?} addresses a satellite level directly; use side_couplings",
                f.id
            )));
        }
        finite("rabi", f.rabi)?;
        finite("detuning", f.detuning)?;
        finite("shift_coefficient", f.shift_coefficient)?;
        if f.rabi < 0.0 {
            return Err(Error::NonPhysicalParams { name: "rabi", value: f.rabi });
        }
        for side in &f.side_couplings {
            finite("ratio", side.ratio)?;
            let parent = levels
                .get(side.satellite)
                .and_then(|l| l.satellite.as_ref())
                .map(|s| s.parent);
            match parent {
                Some(p) if p == f.lower || p == f.upper => {}
                _ => {
                    return Err(Error::InvalidScheme(format!(
                        "field {:?} side coupling must target a satellite of one of its levels",
                        f.id
                    )))
                }
            }
        }
    }

    for d in &dephasing {
        finite("dephasing rate", d.rate)?;
        if d.rate < 0.0 {
            return Err(Error::NonPhysicalParams { name: "dephasing rate", value: d.rate });
        }
        let (a, b) = d.levels;
        if a >= n || b >= n || a == b {
            return Err(Error::InvalidScheme(
                "dephasing channel must name two distinct existing levels".into(),
            ));
        }
    }

    finite("sigma", inhom.sigma)?;
    if inhom.sigma <= 0.0 {
        return Err(Error::NonPhysicalParams { name: "sigma", value: inhom.sigma });
    }

    let probe = fields.iter().position(|f| f.id == PROBE_ID).unwrap();
    let frame = spanning_tree(&levels, &fields, probe)?;
    Ok(LevelScheme {
        levels,
        fields,
        dephasing,
        inhom,
        probe,
        frame,
    })
}

fn validate_branches(level: &Level, n: usize) -> Result<()> {
    let bad = |reason: String| Error::BadBranching {
        level: level.label.clone(),
        reason,
    };
    let mut sum = 0.0;
    for b in &level.decay_branches {
        if b.target == level.id {
            return Err(bad("self-branching".into()));
        }
        if b.target >= n {
            return Err(bad(format!("target {} does not exist", b.target)));
        }
        if !(b.fraction >= 0.0 && b.fraction.is_finite()) {
            return Err(bad(format!("fraction {} is negative", b.fraction)));
        }
        sum += b.fraction;
    }
    if level.population_decay_rate > 0.0 && (sum - 1.0).abs() > 1e-9 {
        return Err(bad(format!("fractions sum to {sum}, not 1")));
    }
    Ok(())
}

/// Union-find check that the fields form a spanning tree of the
/// non-satellite levels, then a breadth-first ordering from the probe's
/// lower level.
fn spanning_tree(levels: &[Level], fields: &[DriveField], probe: usize) -> Result<Vec<FrameStep>> {
    let n = levels.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for f in fields {
        let (a, b) = (root(&mut parent, f.lower), root(&mut parent, f.upper));
        if a == b {
            return Err(Error::CyclicDriveGraph(format!(
                "field {:?} ({} - {})",
                f.id, levels[f.lower].label, levels[f.upper].label
            )));
        }
        parent[a] = b;
    }

    let start = fields[probe].lower;
    let mut seen = vec![false; n];
    seen[start] = true;
    let mut queue = std::collections::VecDeque::from([start]);
    let mut frame = Vec::with_capacity(n - 1);
    while let Some(cur) = queue.pop_front() {
        for (fi, f) in fields.iter().enumerate() {
            let (next, upward) = if f.lower == cur {
                (f.upper, true)
            } else if f.upper == cur {
                (f.lower, false)
            } else {
                continue;
            };
            if !seen[next] {
                seen[next] = true;
                frame.push(FrameStep { field: fi, from: cur, to: next, upward });
                queue.push_back(next);
            }
        }
    }
    for (i, level) in levels.iter().enumerate() {
        let reached = match &level.satellite {
            Some(s) => seen[s.parent],
            None => seen[i],
        };
        if !reached {
            return Err(Error::DisconnectedDriveGraph(level.label.clone()));
        }
    }
    Ok(frame)
}

impl LevelScheme {
    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn fields(&self) -> &[DriveField] {
        &self.fields
    }

    pub fn dephasing(&self) -> &[DephasingChannel] {
        &self.dephasing
    }

    pub fn inhom(&self) -> &InhomogeneityModel {
        &self.inhom
    }

    pub fn dim(&self) -> usize {
        self.levels.len()
    }

    pub fn probe(&self) -> &DriveField {
        &self.fields[self.probe]
    }

    pub(crate) fn probe_index(&self) -> usize {
        self.probe
    }

    pub(crate) fn frame_steps(&self) -> &[FrameStep] {
        &self.frame
    }

    pub fn field(&self, id: &str) -> Option<&DriveField> {
        self.fields.iter().find(|f| f.id == id)
    }

    pub fn level_by_label(&self, label: &str) -> Option<&Level> {
        self.levels.iter().find(|l| l.label == label)
    }

    /// HWHM of the probe's upper level (the homogeneous probe linewidth).
    pub fn probe_gamma(&self) -> f64 {
        self.levels[self.probe().upper].hwhm()
    }

    /// Standard deviation of a field's shift, MHz.
    pub fn field_sigma(&self, id: &str) -> Option<f64> {
        self.field(id).map(|f| f.shift_coefficient.abs())
    }

    /// Coefficient of `u` in a level's rotating-frame energy: how strongly the
    /// ensemble variable moves that level relative to the probe's lower level.
    /// For the two-photon level of an N or ladder scheme this is the residual
    /// two-photon inhomogeneity.
    pub fn level_shift_coefficient(&self, level: usize) -> f64 {
        let mut coeff = vec![0.0; self.dim()];
        for step in &self.frame {
            let c = self.fields[step.field].shift_coefficient;
            coeff[step.to] = coeff[step.from] + if step.upward { c } else { -c };
        }
        match &self.levels[level].satellite {
            Some(s) => coeff[s.parent],
            None => coeff[level],
        }
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn digest(&self) -> String {
        let json = self.to_json();
        let hash = Sha256::digest(json.as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scheme serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))
    }

    fn rebuild(&self, fields: Vec<DriveField>) -> Result<Self> {
        build_scheme(self.levels.clone(), fields, self.dephasing.clone(), self.inhom.clone())
    }

    fn field_mut_index(&self, id: &str) -> Result<usize> {
        self.fields
            .iter()
            .position(|f| f.id == id)
            .ok_or_else(|| Error::InvalidScheme(format!("no field with id {id:?}")))
    }

    pub fn with_rabi(&self, id: &str, rabi: f64) -> Result<Self> {
        let i = self.field_mut_index(id)?;
        let mut fields = self.fields.clone();
        fields[i].rabi = rabi;
        self.rebuild(fields)
    }

    pub fn with_detuning(&self, id: &str, detuning: f64) -> Result<Self> {
        let i = self.field_mut_index(id)?;
        let mut fields = self.fields.clone();
        fields[i].detuning = detuning;
        self.rebuild(fields)
    }

    /// Copy with every non-probe field switched off.
    pub fn bare(&self) -> Self {
        let mut fields = self.fields.clone();
        for (i, f) in fields.iter_mut().enumerate() {
            if i != self.probe {
                f.rabi = 0.0;
            }
        }
        self.rebuild(fields).expect("zeroing Rabi frequencies keeps a valid scheme")
    }

    /// Copy with all non-probe Rabi frequencies multiplied by `factor`.
    pub fn with_drive_scale(&self, factor: f64) -> Result<Self> {
        let mut fields = self.fields.clone();
        for (i, f) in fields.iter_mut().enumerate() {
            if i != self.probe {
                f.rabi *= factor;
            }
        }
        self.rebuild(fields)
    }

    /// Copy with every shift coefficient and sigma multiplied by `factor`.
    pub fn with_inhomogeneity_scale(&self, factor: f64) -> Result<Self> {
        let mut fields = self.fields.clone();
        for f in &mut fields {
            f.shift_coefficient *= factor;
        }
        build_scheme(
            self.levels.clone(),
            fields,
            self.dephasing.clone(),
            InhomogeneityModel::gaussian(self.inhom.sigma * factor),
        )
    }

    /// Copy with every rate, Rabi frequency, detuning, splitting and shift
    /// multiplied by `factor`.
    pub fn with_unit_scale(&self, factor: f64) -> Result<Self> {
        let levels = self
            .levels
            .iter()
            .map(|l| {
                let mut l = l.clone();
                l.population_decay_rate *= factor;
                if let Some(s) = &mut l.satellite {
                    s.splitting *= factor;
                }
                l
            })
            .collect();
        let fields = self
            .fields
            .iter()
            .map(|f| {
                let mut f = f.clone();
                f.rabi *= factor;
                f.detuning *= factor;
                f.shift_coefficient *= factor;
                f
            })
            .collect();
        let dephasing = self
            .dephasing
            .iter()
            .map(|d| DephasingChannel { levels: d.levels, rate: d.rate * factor })
            .collect();
        build_scheme(levels, fields, dephasing, InhomogeneityModel::gaussian(self.inhom.sigma * factor))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetKind {
    TwoLevel,
    Lambda,
    NType,
    LadderRydberg,
    NTypeExtraHf,
}

impl FromStr for PresetKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_level" => Ok(PresetKind::TwoLevel),
            "lambda" => Ok(PresetKind::Lambda),
            "n_type" => Ok(PresetKind::NType),
            "ladder_rydberg" => Ok(PresetKind::LadderRydberg),
            "n_type_extra_hf" => Ok(PresetKind::NTypeExtraHf),
            other => Err(Error::UnknownKind(other.to_string())),
        }
    }
}

impl fmt::Display for PresetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PresetKind::TwoLevel => "two_level",
            PresetKind::Lambda => "lambda",
            PresetKind::NType => "n_type",
            PresetKind::LadderRydberg => "ladder_rydberg",
            PresetKind::NTypeExtraHf => "n_type_extra_hf",
        };
        f.write_str(s)
    }
}

/// Physical inputs for the preset schemes. All rates are HWHM in MHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PresetParams {
    /// Coupling Rabi frequency.
    pub omega: f64,
    /// Coupling detuning.
    pub delta: f64,
    pub omega_r: f64,
    pub delta_r: f64,
    /// Probe upper-level HWHM.
    pub gamma: f64,
    /// Recovery upper-level HWHM.
    pub gamma_r: f64,
    /// Total decay rate of the g-s coherence.
    pub gamma_sg: f64,
    /// Population return rate s -> g (N/Lambda: transit and repumping) or
    /// s -> e (ladder: radiative). Contributes half of itself to gamma_sg;
    /// the rest of gamma_sg is pure dephasing.
    pub s_population_decay: f64,
    /// Doppler (or strain) width seen by the probe.
    pub sigma: f64,
    /// Residual two-photon width of the ladder scheme.
    pub sigma2: f64,
    /// Recovery-to-coupling wavevector ratio k_r / k.
    pub eta: f64,
    /// Defaults to 0.01 * gamma.
    pub probe_rabi: Option<f64>,
    pub probe_detuning: f64,
    /// Fraction of e decays that land in g (rest go to s).
    pub e_branch_to_g: f64,
    /// Splitting of the extra excited hyperfine level above e.
    pub hf_splitting: f64,
    pub hf_probe_ratio: f64,
    pub hf_coupling_ratio: f64,
}

impl Default for PresetParams {
    fn default() -> Self {
        PresetParams {
            omega: 29.0,
            delta: -270.0,
            omega_r: 29.0,
            delta_r: -270.0,
            gamma: 2.875,
            gamma_r: 3.033,
            gamma_sg: 0.35,
            s_population_decay: 0.7,
            sigma: 220.0,
            sigma2: 1.0,
            eta: 1.0,
            probe_rabi: None,
            probe_detuning: 0.0,
            e_branch_to_g: 0.5,
            hf_splitting: 814.5,
            hf_probe_ratio: 1.0,
            hf_coupling_ratio: 1.0,
        }
    }
}

impl PresetParams {
    /// Defaults for the ladder scheme: D2-line intermediate level, 5D as
    /// the two-photon level and a Rydberg F level for recovery.
    pub fn ladder() -> Self {
        PresetParams {
            omega: 55.0,
            delta: 0.0,
            omega_r: 45.0,
            delta_r: 0.0,
            gamma: 3.033,
            gamma_r: 1.0,
            gamma_sg: 1.25,
            s_population_decay: 0.66,
            eta: (45.0f64 / 55.0).powi(2),
            ..PresetParams::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let checks: [(&'static str, f64, bool); 10] = [
            ("omega", self.omega, self.omega >= 0.0),
            ("omega_r", self.omega_r, self.omega_r >= 0.0),
            ("gamma", self.gamma, self.gamma > 0.0),
            ("gamma_r", self.gamma_r, self.gamma_r > 0.0),
            ("gamma_sg", self.gamma_sg, self.gamma_sg >= 0.0),
            ("s_population_decay", self.s_population_decay, self.s_population_decay >= 0.0),
            ("sigma", self.sigma, self.sigma > 0.0),
            ("sigma2", self.sigma2, self.sigma2 >= 0.0),
            ("eta", self.eta, self.eta > 0.0),
            ("e_branch_to_g", self.e_branch_to_g, (0.0..=1.0).contains(&self.e_branch_to_g)),
        ];
        for (name, value, ok) in checks {
            if !ok || !value.is_finite() {
                return Err(Error::NonPhysicalParams { name, value });
            }
        }
        if let Some(p) = self.probe_rabi {
            if !(p >= 0.0 && p.is_finite()) {
                return Err(Error::NonPhysicalParams { name: "probe_rabi", value: p });
            }
        }
        for (name, value) in [
            ("delta", self.delta),
            ("delta_r", self.delta_r),
            ("probe_detuning", self.probe_detuning),
            ("hf_splitting", self.hf_splitting),
            ("hf_probe_ratio", self.hf_probe_ratio),
            ("hf_coupling_ratio", self.hf_coupling_ratio),
        ] {
            finite(name, value)?;
        }
        if 2.0 * self.gamma_sg < self.s_population_decay {
            return Err(Error::NonPhysicalParams {
                name: "s_population_decay (exceeds 2 * gamma_sg)",
                value: self.s_population_decay,
            });
        }
        Ok(())
    }

    fn probe_rabi(&self) -> f64 {
        self.probe_rabi.unwrap_or(0.01 * self.gamma)
    }

    fn sg_dephasing(&self) -> Vec<DephasingChannel> {
        let rate = self.gamma_sg - 0.5 * self.s_population_decay;
        if rate > 0.0 {
            vec![DephasingChannel { levels: (0, 2), rate }]
        } else {
            Vec::new()
        }
    }
}

/// Build one of the named configurations.
pub fn preset(kind: PresetKind, p: &PresetParams) -> Result<LevelScheme> {
    p.validate()?;
    let (g, e, s, r) = (0, 1, 2, 3);
    let be = p.e_branch_to_g;
    let probe = DriveField::new(PROBE_ID, g, e, p.probe_rabi(), p.probe_detuning, p.sigma);
    let inhom = InhomogeneityModel::gaussian(p.sigma);
    let s_return = |target: usize| {
        if p.s_population_decay > 0.0 {
            Level::new(s, "s", p.s_population_decay, &[(target, 1.0)])
        } else {
            Level::stable(s, "s")
        }
    };
    match kind {
        PresetKind::TwoLevel => build_scheme(
            vec![Level::stable(g, "g"), Level::new(e, "e", 2.0 * p.gamma, &[(g, 1.0)])],
            vec![probe],
            Vec::new(),
            inhom,
        ),
        PresetKind::Lambda | PresetKind::NType | PresetKind::NTypeExtraHf => {
            let mut levels = vec![
                Level::stable(g, "g"),
                Level::new(e, "e", 2.0 * p.gamma, &[(g, be), (s, 1.0 - be)]),
                s_return(g),
            ];
            let mut coupling = DriveField::new(COUPLING_ID, s, e, p.omega, p.delta, p.sigma);
            let mut probe = probe;
            let mut fields = Vec::new();
            if kind != PresetKind::Lambda {
                levels.push(Level::new(r, "r", 2.0 * p.gamma_r, &[(g, 1.0)]));
            }
            if kind == PresetKind::NTypeExtraHf {
                let h = levels.len();
                let mut level = Level::new(h, "e2", 2.0 * p.gamma, &[(g, be), (s, 1.0 - be)]);
                level.satellite = Some(Satellite { parent: e, splitting: p.hf_splitting });
                levels.push(level);
                probe.side_couplings.push(SideCoupling { satellite: h, ratio: p.hf_probe_ratio });
                coupling.side_couplings.push(SideCoupling { satellite: h, ratio: p.hf_coupling_ratio });
            }
            fields.push(probe);
            fields.push(coupling);
            if kind != PresetKind::Lambda {
                fields.push(DriveField::new(RECOVERY_ID, g, r, p.omega_r, p.delta_r, p.eta * p.sigma));
            }
            build_scheme(levels, fields, p.sg_dephasing(), inhom)
        }
        PresetKind::LadderRydberg => {
            let coupling_coeff = p.sigma2 - p.sigma;
            let levels = vec![
                Level::stable(g, "g"),
                Level::new(e, "e", 2.0 * p.gamma, &[(g, 1.0)]),
                s_return(e),
                Level::new(r, "r", 2.0 * p.gamma_r, &[(s, 1.0)]),
            ];
            let fields = vec![
                probe,
                DriveField::new(COUPLING_ID, e, s, p.omega, p.delta, coupling_coeff),
                DriveField::new(RECOVERY_ID, s, r, p.omega_r, p.delta_r, p.eta * coupling_coeff),
            ];
            build_scheme(levels, fields, p.sg_dephasing(), inhom)
        }
    }
}

pub fn preset_by_name(kind: &str, params: &PresetParams) -> Result<LevelScheme> {
    preset(kind.parse()?, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_level_parts() -> (Vec<Level>, Vec<DriveField>) {
        (
            vec![Level::stable(0, "g"), Level::new(1, "e", 5.75, &[(0, 1.0)])],
            vec![DriveField::new(PROBE_ID, 0, 1, 0.02875, 0.0, 220.0)],
        )
    }

    #[test]
    fn minimal_two_level_is_valid() {
        let (levels, fields) = two_level_parts();
        let s = build_scheme(levels, fields, vec![], InhomogeneityModel::gaussian(220.0)).unwrap();
        assert_eq!(s.dim(), 2);
        assert_eq!(s.probe_gamma(), 2.875);
    }

    #[test]
    fn n_type_by_hand_is_valid() {
        let levels = vec![
            Level::stable(0, "g"),
            Level::new(1, "e", 5.75, &[(0, 0.5), (2, 0.5)]),
            Level::stable(2, "s"),
            Level::new(3, "r", 6.066, &[(0, 1.0)]),
        ];
        let fields = vec![
            DriveField::new(PROBE_ID, 0, 1, 0.03, 0.0, 220.0),
            DriveField::new(COUPLING_ID, 2, 1, 29.0, -270.0, 220.0),
            DriveField::new(RECOVERY_ID, 0, 3, 29.0, -270.0, 220.0),
        ];
        let s = build_scheme(levels, fields, vec![], InhomogeneityModel::gaussian(220.0)).unwrap();
        assert_eq!(s.level_shift_coefficient(2), 0.0);
        assert_eq!(s.level_shift_coefficient(3), 220.0);
    }

    #[test]
    fn parallel_fields_are_cyclic() {
        let levels = vec![
            Level::stable(0, "g"),
            Level::new(1, "e", 5.75, &[(0, 1.0)]),
            Level::stable(2, "s"),
        ];
        let fields = vec![
            DriveField::new(PROBE_ID, 0, 1, 0.03, 0.0, 220.0),
            DriveField::new("other", 0, 1, 1.0, 0.0, 220.0),
            DriveField::new(COUPLING_ID, 2, 1, 29.0, -270.0, 220.0),
        ];
        let err = build_scheme(levels, fields, vec![], InhomogeneityModel::gaussian(220.0)).unwrap_err();
        assert!(matches!(err, Error::CyclicDriveGraph(_)), "{err}");
    }

    #[test]
    fn disconnected_level_is_rejected() {
        let (mut levels, fields) = two_level_parts();
        levels.push(Level::stable(2, "x"));
        let err = build_scheme(levels, fields, vec![], InhomogeneityModel::gaussian(1.0)).unwrap_err();
        assert!(matches!(err, Error::DisconnectedDriveGraph(_)));
    }

    #[test]
    fn missing_probe_is_rejected() {
        let (levels, mut fields) = two_level_parts();
        fields[0].id = "coupling".into();
        let err = build_scheme(levels, fields, vec![], InhomogeneityModel::gaussian(1.0)).unwrap_err();
        assert_eq!(err, Error::MissingProbe(0));
    }

    #[test]
    fn branching_must_sum_to_one() {
        let (mut levels, fields) = two_level_parts();
        levels[1].decay_branches[0].fraction = 0.7;
        let err = build_scheme(levels, fields, vec![], InhomogeneityModel::gaussian(1.0)).unwrap_err();
        assert!(matches!(err, Error::BadBranching { .. }));

        let (mut levels, fields) = two_level_parts();
        levels[1].decay_branches[0].target = 1;
        let err = build_scheme(levels, fields, vec![], InhomogeneityModel::gaussian(1.0)).unwrap_err();
        assert!(matches!(err, Error::BadBranching { .. }));
    }

    #[test]
    fn too_many_levels() {
        let levels: Vec<Level> = (0..7).map(|i| Level::stable(i, "x")).collect();
        let fields = (1..7)
            .map(|i| {
                let id = if i == 1 { PROBE_ID.to_string() } else { format!("f{i}") };
                DriveField::new(&id, 0, i, 1.0, 0.0, 1.0)
            })
            .collect();
        assert!(build_scheme(levels, fields, vec![], InhomogeneityModel::gaussian(1.0)).is_err());
    }

    #[test]
    fn presets_validate() {
        let p = PresetParams::default();
        for kind in [
            PresetKind::TwoLevel,
            PresetKind::Lambda,
            PresetKind::NType,
            PresetKind::NTypeExtraHf,
        ] {
            let s = preset(kind, &p).unwrap();
            if kind != PresetKind::TwoLevel {
                assert_eq!(s.level_shift_coefficient(2), 0.0, "{kind}");
            }
        }
        let ladder = preset(PresetKind::LadderRydberg, &PresetParams::ladder()).unwrap();
        assert_eq!(ladder.level_shift_coefficient(2), 1.0);
        let p = ladder.field(PROBE_ID).unwrap().shift_coefficient;
        let c = ladder.field(COUPLING_ID).unwrap().shift_coefficient;
        assert_eq!((p + c).abs(), 1.0);
    }

    #[test]
    fn n_type_measurement_constants() {
        let s = preset(PresetKind::NType, &PresetParams::default()).unwrap();
        assert_eq!(s.dim(), 4);
        assert_eq!(s.field(RECOVERY_ID).unwrap().shift_coefficient, 220.0);
        assert_eq!(s.probe().rabi, 0.02875);
        assert_eq!(s.level_by_label("r").unwrap().hwhm(), 3.033);
    }

    #[test]
    fn two_level_with_zero_probe_is_valid() {
        let p = PresetParams { probe_rabi: Some(0.0), ..Default::default() };
        assert!(preset(PresetKind::TwoLevel, &p).is_ok());
    }

    #[test]
    fn unknown_kind_and_bad_params() {
        assert_eq!("v_type".parse::<PresetKind>().unwrap_err(), Error::UnknownKind("v_type".into()));
        let p = PresetParams { gamma: -1.0, ..Default::default() };
        assert!(matches!(preset(PresetKind::NType, &p), Err(Error::NonPhysicalParams { .. })));
    }

    #[test]
    fn extra_hf_level_is_a_satellite() {
        let s = preset(PresetKind::NTypeExtraHf, &PresetParams::default()).unwrap();
        assert_eq!(s.dim(), 5);
        assert_eq!(s.levels()[4].satellite.as_ref().unwrap().parent, 1);
        assert_eq!(s.level_shift_coefficient(4), s.level_shift_coefficient(1));
    }

    #[test]
    fn unknown_json_key_is_rejected() {
        let s = preset(PresetKind::TwoLevel, &PresetParams::default()).unwrap();
        let text = s.to_json().replace("\"sigma\"", "\"sigmma\"");
        assert!(LevelScheme::from_json(&text).is_err());
    }
}
