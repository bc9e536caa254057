//! The subset-equalizing state machine.
//!
//! Each member agent `i` holds an estimate `z_i` of the solution of the
//! pooled system `(Σ P_i) z = Σ q_i` together with a weight matrix `Q_i`;
//! non-members hold nothing. At every step the agents in `join ∪ interact`
//! are set to the `Q`-weighted mean of the previous values held by
//! `interact ∪ leave`:
//!
//! ```text
//! z_new = (Σ_{j ∈ I∪L} Q_j)⁻¹ Σ_{j ∈ I∪L} Q_j z_j
//! ```
//!
//! On membership changes the `Q` mass of `interact ∪ leave` is split evenly
//! over `join ∪ interact`; otherwise the `Q`s stay put. Two sums are exactly
//! conserved by this update — `Σ Q_i z_i` and `Σ Q_i` over the members —
//! and the state checks both after every step, failing loudly on drift
//! beyond `1e-9` relative: the algebra guarantees them, so a breach is an
//! implementation bug, not a tolerance problem.
//!
//! The monitoring value
//!
//! ```text
//! V(k) = Σ_{i ∈ members} (z_i - z)ᵀ Q_i (z_i - z)
//! ```
//!
//! is non-increasing along any valid schedule and zero exactly at consensus
//! on the true solution `z`. The truth vector is computed once at init and
//! used only for monitoring and stopping rules; no update reads it.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::net::{check_step, ActionStep, AgentId, AgentSet, StepViolation};
use crate::spd::{distance, norm, SpdError, SpdMatrix, SpdViolation, DEFAULT_SPD_TOLERANCE};

/// Relative tolerance on the two conserved sums.
pub const CONSERVATION_TOL: f64 = 1e-9;

/// Slack allowed when checking member weights against the spectral bound.
pub const BETA_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SeError {
    #[error(transparent)]
    Spd(#[from] SpdError),
    #[error(transparent)]
    InvalidStep(#[from] StepViolation),
    #[error("no observation provided for founder {id}")]
    MissingObservation { id: AgentId },
    #[error("observation provided for non-founder {id}")]
    UnexpectedObservation { id: AgentId },
    #[error("observation for agent {id} is not positive definite: {violation}")]
    ObservationNotSpd {
        id: AgentId,
        violation: SpdViolation,
    },
    #[error("observation dimensions disagree: expected {expected}, agent {id} has {found}")]
    ObservationDimension {
        id: AgentId,
        expected: usize,
        found: usize,
    },
    #[error("weighted mean of an empty subset")]
    EmptySubset,
    #[error("agent {id} is not a member")]
    NotMember { id: AgentId },
    #[error(
        "conserved sums drifted at step {k}: qz residual {qz_residual:.3e}, q residual {q_residual:.3e}"
    )]
    ConservationBreach {
        k: usize,
        qz_residual: f64,
        q_residual: f64,
    },
    #[error("contraction factor needs m >= 2, alpha > 0, beta >= alpha")]
    ContractionDomain,
    #[error("rate envelope needs h_star >= 1 and v0 >= 0")]
    EnvelopeDomain,
}

/// One founder's one-time observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub p: SpdMatrix,
    pub q: Vec<f64>,
}

pub type Observations = BTreeMap<AgentId, Observation>;

/// The solution of the pooled system `(Σ P_i) z = Σ q_i`.
pub fn ground_truth(observations: &Observations) -> Result<Vec<f64>, SeError> {
    let first = observations.values().next().ok_or(SeError::EmptySubset)?;
    let n = first.p.dim();
    let mut p_sum = SpdMatrix::identity(n).scaled(0.0);
    let mut q_sum = vec![0.0; n];
    for (&id, obs) in observations {
        if obs.p.dim() != n {
            return Err(SeError::ObservationDimension {
                id,
                expected: n,
                found: obs.p.dim(),
            });
        }
        if obs.q.len() != n {
            return Err(SeError::ObservationDimension {
                id,
                expected: n,
                found: obs.q.len(),
            });
        }
        p_sum = p_sum.add(&obs.p)?;
        for (acc, v) in q_sum.iter_mut().zip(&obs.q) {
            *acc += v;
        }
    }
    Ok(p_sum.solve(&q_sum)?)
}

/// State held by one member: estimate and weight. A non-member has no slot.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSlot {
    pub z: Vec<f64>,
    pub q: SpdMatrix,
}

/// Full network state: member slots plus the conserved sums and the
/// monitoring-only truth vector.
#[derive(Debug, Clone)]
pub struct NetworkState {
    time: usize,
    dimension: usize,
    slots: BTreeMap<AgentId, AgentSlot>,
    conserved_qz: Vec<f64>,
    conserved_q: SpdMatrix,
    truth: Vec<f64>,
    beta: f64,
}

impl NetworkState {
    /// Initializes founders with `z_i = P_i⁻¹ q_i` and `Q_i = P_i`; everyone
    /// else starts undefined. Requires an observation for exactly each
    /// founder, all positive definite and of one dimension.
    pub fn init(observations: &Observations, founders: &AgentSet) -> Result<Self, SeError> {
        for &id in founders {
            if !observations.contains_key(&id) {
                return Err(SeError::MissingObservation { id });
            }
        }
        for &id in observations.keys() {
            if !founders.contains(&id) {
                return Err(SeError::UnexpectedObservation { id });
            }
        }
        let dimension = observations
            .values()
            .next()
            .ok_or(SeError::EmptySubset)?
            .p
            .dim();
        for (&id, obs) in observations {
            if obs.p.dim() != dimension || obs.q.len() != dimension {
                return Err(SeError::ObservationDimension {
                    id,
                    expected: dimension,
                    found: if obs.p.dim() != dimension {
                        obs.p.dim()
                    } else {
                        obs.q.len()
                    },
                });
            }
            obs.p
                .assert_spd(DEFAULT_SPD_TOLERANCE)
                .map_err(|violation| SeError::ObservationNotSpd { id, violation })?;
        }

        let truth = ground_truth(observations)?;
        let mut slots = BTreeMap::new();
        for (&id, obs) in observations {
            let z = obs.p.solve(&obs.q)?;
            slots.insert(
                id,
                AgentSlot {
                    z,
                    q: obs.p.clone(),
                },
            );
        }

        let mut state = NetworkState {
            time: 0,
            dimension,
            slots,
            conserved_qz: vec![0.0; dimension],
            conserved_q: SpdMatrix::identity(dimension).scaled(0.0),
            truth,
            beta: 0.0,
        };
        state.conserved_qz = state.sum_qz();
        state.conserved_q = state.sum_q_all();
        state.beta = state.conserved_q.spectral_radius();
        Ok(state)
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn truth(&self) -> &[f64] {
        &self.truth
    }

    /// Spectral radius of the conserved weight sum; every member weight
    /// stays below it.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn member_set(&self) -> AgentSet {
        self.slots.keys().copied().collect()
    }

    pub fn member_count(&self) -> usize {
        self.slots.len()
    }

    pub fn slot(&self, id: AgentId) -> Option<&AgentSlot> {
        self.slots.get(&id)
    }

    pub fn slots(&self) -> impl Iterator<Item = (AgentId, &AgentSlot)> {
        self.slots.iter().map(|(&id, slot)| (id, slot))
    }

    /// `(Σ_{i ∈ X} Q_i)⁻¹ Σ_{i ∈ X} Q_i z_i` over current member values.
    ///
    /// A singleton subset returns the member's own estimate unchanged (the
    /// weighted mean of one value is that value, and short-circuiting keeps
    /// it bit-exact).
    pub fn weighted_mean(&self, subset: &AgentSet) -> Result<Vec<f64>, SeError> {
        if subset.is_empty() {
            return Err(SeError::EmptySubset);
        }
        for &id in subset {
            if !self.slots.contains_key(&id) {
                return Err(SeError::NotMember { id });
            }
        }
        if subset.len() == 1 {
            let id = *subset.iter().next().unwrap();
            return Ok(self.slots[&id].z.clone());
        }
        let mut q_sum: Option<SpdMatrix> = None;
        let mut rhs = vec![0.0; self.dimension];
        for &id in subset {
            let slot = &self.slots[&id];
            q_sum = Some(match q_sum {
                Some(acc) => acc.add(&slot.q)?,
                None => slot.q.clone(),
            });
            let qz = slot.q.matvec(&slot.z)?;
            for (acc, v) in rhs.iter_mut().zip(&qz) {
                *acc += v;
            }
        }
        Ok(q_sum.expect("subset nonempty").solve(&rhs)?)
    }

    /// Applies one action step: equalizes `join ∪ interact` onto the
    /// weighted mean of `interact ∪ leave`, redistributes weight on
    /// membership changes, erases leavers, and re-checks conservation.
    pub fn apply_step(&mut self, step: &ActionStep) -> Result<(), SeError> {
        let members = self.member_set();
        // the state itself has no agent-count bound; the id range belongs to
        // the driving sequence
        check_step(step, &members, usize::MAX).map_err(|kind| StepViolation {
            k: self.time + 1,
            kind,
        })?;

        let sources = step.sources();
        let group = step.group();
        let z_new = self.weighted_mean(&sources)?;
        let q_new = if step.changes_membership() {
            let mut sum: Option<SpdMatrix> = None;
            for &id in &sources {
                let q = &self.slots[&id].q;
                sum = Some(match sum {
                    Some(acc) => acc.add(q)?,
                    None => q.clone(),
                });
            }
            Some(
                sum.expect("sources nonempty")
                    .scaled(1.0 / group.len() as f64),
            )
        } else {
            None
        };

        for id in &step.leave {
            self.slots.remove(id);
        }
        for &id in &group {
            match &q_new {
                Some(q) => {
                    self.slots.insert(
                        id,
                        AgentSlot {
                            z: z_new.clone(),
                            q: q.clone(),
                        },
                    );
                }
                None => {
                    // static membership: group ⊆ members, weights unchanged
                    self.slots
                        .get_mut(&id)
                        .expect("static-membership group members exist")
                        .z = z_new.clone();
                }
            }
        }
        self.time += 1;

        let (qz_residual, q_residual) = self.conservation_residuals();
        if qz_residual > CONSERVATION_TOL || q_residual > CONSERVATION_TOL {
            return Err(SeError::ConservationBreach {
                k: self.time,
                qz_residual,
                q_residual,
            });
        }
        Ok(())
    }

    fn sum_qz(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.dimension];
        for slot in self.slots.values() {
            let qz = slot.q.matvec(&slot.z).expect("dimensions consistent");
            for (a, v) in acc.iter_mut().zip(&qz) {
                *a += v;
            }
        }
        acc
    }

    fn sum_q_all(&self) -> SpdMatrix {
        let mut acc = SpdMatrix::identity(self.dimension).scaled(0.0);
        for slot in self.slots.values() {
            acc = acc.add(&slot.q).expect("dimensions consistent");
        }
        acc
    }

    /// Relative drift of the two conserved sums from their initial values.
    pub fn conservation_residuals(&self) -> (f64, f64) {
        let qz = self.sum_qz();
        let qz_residual = distance(&qz, &self.conserved_qz) / (1.0 + norm(&self.conserved_qz));
        let q = self.sum_q_all();
        let mut diff = 0.0;
        for (a, b) in q.entries().iter().zip(self.conserved_q.entries()) {
            diff += (a - b) * (a - b);
        }
        let q_residual = diff.sqrt() / (1.0 + self.conserved_q.frobenius_norm());
        (qz_residual, q_residual)
    }

    /// `Σ_{members} (z_i - z)ᵀ Q_i (z_i - z)`, compensated summation.
    ///
    /// Nonnegative by definition; rounding of a near-zero sum is clamped so
    /// callers can rely on the sign.
    pub fn lyapunov(&self) -> f64 {
        compensated_sum(self.slots.values().map(|slot| {
            let d: Vec<f64> = slot.z.iter().zip(&self.truth).map(|(a, b)| a - b).collect();
            slot.q.quadratic_form(&d).expect("dimensions consistent")
        }))
        .max(0.0)
    }

    pub fn max_member_error(&self) -> f64 {
        self.slots
            .values()
            .map(|slot| distance(&slot.z, &self.truth))
            .fold(0.0, f64::max)
    }

    pub fn min_member_error(&self) -> f64 {
        self.slots
            .values()
            .map(|slot| distance(&slot.z, &self.truth))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn min_member_eigenvalue(&self) -> f64 {
        self.member_eigen_extremes().0
    }

    pub fn max_member_spectral_radius(&self) -> f64 {
        self.member_eigen_extremes().1
    }

    /// `(min over members of their smallest eigenvalue, max over members of
    /// their largest)` in one eigendecomposition per member.
    pub fn member_eigen_extremes(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for slot in self.slots.values() {
            let eigs = slot.q.eigenvalues();
            lo = lo.min(eigs[0]);
            hi = hi.max(*eigs.last().expect("dimension positive"));
        }
        (lo, hi)
    }
}

/// Neumaier-compensated sum; keeps the monitoring value honest when terms
/// span many magnitudes.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// The per-window contraction factor
/// `((4β/α)^(M-1) · M · M!) / ((4β/α)^(M-1) · M · M! + 1)`,
/// evaluated in log space so large `M` and large `β/α` do not overflow.
pub fn contraction_factor(m: usize, alpha: f64, beta: f64) -> Result<f64, SeError> {
    if m < 2 || !(alpha > 0.0) || beta < alpha {
        return Err(SeError::ContractionDomain);
    }
    let mut log_t = (m as f64 - 1.0) * (4.0 * beta / alpha).ln() + (m as f64).ln();
    for j in 2..=m {
        log_t += (j as f64).ln();
    }
    // t / (t + 1) = 1 / (1 + exp(-log t)); exp underflows harmlessly to 0
    Ok(1.0 / (1.0 + (-log_t).exp()))
}

/// Envelope `v0 · factor^⌊k / h*⌋` bounding the monitoring value at time `k`
/// for a schedule with worst-case mixing time `h*`. Divide by the uniform
/// weight floor `alpha` to bound the squared member error instead.
pub fn rate_envelope(
    v0: f64,
    m: usize,
    alpha: f64,
    beta: f64,
    h_star: usize,
    k: usize,
) -> Result<f64, SeError> {
    if h_star < 1 || !(v0 >= 0.0) {
        return Err(SeError::EnvelopeDomain);
    }
    let factor = contraction_factor(m, alpha, beta)?;
    let exponent = (k / h_star) as i32;
    Ok(v0 * factor.powi(exponent))
}

/// One monitoring row per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub members: usize,
    pub lyapunov: f64,
    pub max_error: f64,
    /// Smallest member error; not part of the CSV row set.
    pub min_error: f64,
    pub min_member_eigenvalue: f64,
    /// Largest member weight eigenvalue; not part of the CSV row set.
    pub max_q_spectral_radius: f64,
}

/// Recorded monitoring series for one run.
#[derive(Debug, Clone, Default)]
pub struct LyapunovTrace {
    rows: Vec<TraceRow>,
    beta: Option<f64>,
}

impl LyapunovTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, state: &NetworkState) {
        self.beta.get_or_insert(state.beta());
        let (min_member_eigenvalue, max_q_spectral_radius) = state.member_eigen_extremes();
        self.rows.push(TraceRow {
            k: state.time(),
            members: state.member_count(),
            lyapunov: state.lyapunov(),
            max_error: state.max_member_error(),
            min_error: state.min_member_error(),
            min_member_eigenvalue,
            max_q_spectral_radius,
        });
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn beta(&self) -> Option<f64> {
        self.beta
    }
}

/// Observable evidence about the uniform weight floor over a finite horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdEvidence {
    /// Infimum over the horizon of the per-step minimum member eigenvalue.
    pub alpha_hat: f64,
    /// `(k, min member eigenvalue)` series up to the horizon.
    pub per_step: Vec<(usize, f64)>,
    pub beta: f64,
    /// Largest member weight eigenvalue seen over the horizon.
    pub max_spectral_radius: f64,
    /// Whether every member weight stayed within the spectral bound.
    pub beta_bound_satisfied: bool,
}

/// Summarizes a recorded trace: the observed weight floor `α̂` and the check
/// that no member weight ever exceeded the conserved-sum spectral radius.
pub fn upd_evidence(trace: &LyapunovTrace, horizon: usize) -> UpdEvidence {
    let beta = trace.beta().unwrap_or(0.0);
    let mut alpha_hat = f64::INFINITY;
    let mut max_spectral_radius: f64 = 0.0;
    let mut per_step = Vec::new();
    for row in trace.rows().iter().filter(|r| r.k <= horizon) {
        alpha_hat = alpha_hat.min(row.min_member_eigenvalue);
        max_spectral_radius = max_spectral_radius.max(row.max_q_spectral_radius);
        per_step.push((row.k, row.min_member_eigenvalue));
    }
    UpdEvidence {
        alpha_hat,
        per_step,
        beta,
        max_spectral_radius,
        beta_bound_satisfied: max_spectral_radius <= beta + BETA_SLACK,
    }
}
