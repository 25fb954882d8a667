//! Truncated multi-user MDP.
//!
//! Each user's AoS is capped at `m`; a capped user that is not delivered
//! stays at `m`. The kernel factorizes over users, so expectations are
//! computed by walking the product of per-user rows (at most three entries
//! each) rather than materializing the joint matrix.

use alloc::vec;
use alloc::vec::Vec;

use crate::dynamics::NetworkState;
use crate::error::{Error, Result};
use crate::params::UserParams;
use crate::policy::Scheduler;

/// Largest number of users the solver accepts.
pub const MAX_USERS: usize = 8;
/// Largest truncated state space the solver accepts.
pub const MAX_STATES: usize = 1 << 24;

/// Scheduling action of the MDP: idle or serve one user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Idle,
    User(usize),
}

impl Action {
    pub fn user(self) -> Option<usize> {
        match self {
            Action::Idle => None,
            Action::User(n) => Some(n),
        }
    }
}

/// One user's transition row: up to three (next age, probability) pairs.
#[derive(Debug, Clone, Copy)]
struct Row {
    len: usize,
    next: [u16; 3],
    prob: [f64; 3],
}

impl Row {
    fn new(entries: &[(u64, f64)]) -> Self {
        let mut row = Row {
            len: 0,
            next: [0; 3],
            prob: [0.0; 3],
        };
        for &(x, pr) in entries {
            if pr > 0.0 {
                row.next[row.len] = x as u16;
                row.prob[row.len] = pr;
                row.len += 1;
            }
        }
        row
    }

    fn entries(&self) -> impl Iterator<Item = (u16, f64)> + '_ {
        (0..self.len).map(move |k| (self.next[k], self.prob[k]))
    }
}

const EMPTY_ROW: Row = Row {
    len: 0,
    next: [0; 3],
    prob: [0.0; 3],
};

/// Truncated state space `{0..=m}^N`, enumerated lexicographically with the
/// first user as the most significant digit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruncatedSpace {
    users: usize,
    cap: u64,
    strides: Vec<usize>,
    len: usize,
}

impl TruncatedSpace {
    pub fn new(users: usize, cap: u64) -> Result<Self> {
        if users == 0 || users > MAX_USERS {
            return Err(Error::InvalidParameter {
                name: "users",
                reason: "the MDP solver supports 1..=8 users",
            });
        }
        if cap < 1 || cap > u64::from(u16::MAX) - 1 {
            return Err(Error::InvalidParameter {
                name: "m",
                reason: "truncation must be at least 1",
            });
        }
        let radix = cap as usize + 1;
        let mut len: usize = 1;
        for _ in 0..users {
            len = len
                .checked_mul(radix)
                .filter(|&l| l <= MAX_STATES)
                .ok_or(Error::InvalidParameter {
                    name: "m",
                    reason: "truncated state space too large",
                })?;
        }
        let mut strides = vec![1; users];
        for n in (0..users.saturating_sub(1)).rev() {
            strides[n] = strides[n + 1] * radix;
        }
        Ok(Self {
            users,
            cap,
            strides,
            len,
        })
    }

    pub fn num_users(&self) -> usize {
        self.users
    }

    pub fn cap(&self) -> u64 {
        self.cap
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn index(&self, ages: &[u64]) -> Result<usize> {
        if ages.len() != self.users {
            return Err(Error::InvalidParameter {
                name: "state",
                reason: "wrong number of users",
            });
        }
        let mut idx = 0;
        for (n, &x) in ages.iter().enumerate() {
            if x > self.cap {
                return Err(Error::InvalidParameter {
                    name: "state",
                    reason: "age exceeds truncation",
                });
            }
            idx += x as usize * self.strides[n];
        }
        Ok(idx)
    }

    /// Index of `min(s, m)` componentwise.
    pub fn clamped_index(&self, ages: &[u64]) -> usize {
        ages.iter()
            .zip(&self.strides)
            .map(|(&s, &st)| s.min(self.cap) as usize * st)
            .sum()
    }

    pub fn state(&self, idx: usize) -> Vec<u64> {
        let radix = self.cap as usize + 1;
        self.strides.iter().map(|&st| ((idx / st) % radix) as u64).collect()
    }

    #[inline]
    fn digit(&self, idx: usize, n: usize) -> u64 {
        ((idx / self.strides[n]) % (self.cap as usize + 1)) as u64
    }
}

/// The truncated AoS MDP for a set of users.
#[derive(Debug, Clone)]
pub struct MdpModel {
    users: Vec<UserParams>,
    space: TruncatedSpace,
    /// `rows[n][x * 2 + served]`.
    rows: Vec<Vec<Row>>,
    /// Flattened digits of every state.
    digits: Vec<u16>,
    /// One-step cost of every state.
    costs: Vec<f64>,
}

impl MdpModel {
    pub fn new(users: &[UserParams], cap: u64) -> Result<Self> {
        let space = TruncatedSpace::new(users.len(), cap)?;
        let rows = users
            .iter()
            .map(|u| {
                let (l, p) = (u.lambda(), u.p());
                let mut r = Vec::with_capacity(2 * (cap as usize + 1));
                for x in 0..=cap {
                    let up = (x + 1).min(cap);
                    if x == 0 {
                        let row = Row::new(&[(1, l), (0, 1.0 - l)]);
                        r.push(row);
                        r.push(row);
                    } else {
                        r.push(Row::new(&[(up, 1.0)]));
                        r.push(Row::new(&[(1, l * p), (0, (1.0 - l) * p), (up, 1.0 - p)]));
                    }
                }
                r
            })
            .collect();
        let n = users.len();
        let mut digits = Vec::with_capacity(space.len() * n);
        let mut costs = Vec::with_capacity(space.len());
        for idx in 0..space.len() {
            let mut total = 0u64;
            for u in 0..n {
                let d = space.digit(idx, u);
                digits.push(d as u16);
                total += d;
            }
            costs.push(total as f64 / n as f64);
        }
        Ok(Self {
            users: users.to_vec(),
            space,
            rows,
            digits,
            costs,
        })
    }

    pub fn space(&self) -> &TruncatedSpace {
        &self.space
    }

    pub fn users(&self) -> &[UserParams] {
        &self.users
    }

    pub fn num_states(&self) -> usize {
        self.space.len()
    }

    /// Actions available everywhere: idle first, then each user.
    pub fn actions(&self) -> impl Iterator<Item = Action> {
        core::iter::once(Action::Idle).chain((0..self.users.len()).map(Action::User))
    }

    #[inline]
    fn digits_of(&self, idx: usize) -> &[u16] {
        let n = self.users.len();
        &self.digits[idx * n..(idx + 1) * n]
    }

    /// One-step cost `(1/N) Σ x_n`.
    #[inline]
    pub fn cost(&self, idx: usize) -> f64 {
        self.costs[idx]
    }

    fn check_action(&self, a: Action) -> Result<()> {
        match a {
            Action::User(n) if n >= self.users.len() => Err(Error::UserOutOfRange {
                user: n,
                users: self.users.len(),
            }),
            _ => Ok(()),
        }
    }

    /// Next-state distribution from state `idx` under `a`, as
    /// `(state index, probability)` pairs with positive mass.
    pub fn kernel(&self, idx: usize, a: Action) -> Result<Vec<(usize, f64)>> {
        if idx >= self.num_states() {
            return Err(Error::InvalidParameter {
                name: "state",
                reason: "index outside truncated space",
            });
        }
        self.check_action(a)?;
        let mut out = Vec::new();
        let rows = self.rows_for(idx, a);
        let n = self.users.len();
        walk(&rows[..n], &self.space.strides, 0, 0, 1.0, &mut |j, pr| {
            out.push((j, pr))
        });
        Ok(out)
    }

    /// Same as [`MdpModel::kernel`] but keyed by explicit ages.
    pub fn kernel_states(&self, ages: &[u64], a: Action) -> Result<Vec<(Vec<u64>, f64)>> {
        let idx = self.space.index(ages)?;
        Ok(self
            .kernel(idx, a)?
            .into_iter()
            .map(|(j, pr)| (self.space.state(j), pr))
            .collect())
    }

    #[inline]
    fn rows_for(&self, idx: usize, a: Action) -> [&Row; MAX_USERS] {
        let mut rows = [&EMPTY_ROW; MAX_USERS];
        let served = a.user();
        for (n, (&x, r)) in self.digits_of(idx).iter().zip(rows.iter_mut()).enumerate() {
            let s = usize::from(served == Some(n));
            *r = &self.rows[n][x as usize * 2 + s];
        }
        rows
    }

    /// `E[V(x') | x, a]`.
    #[inline]
    pub fn expected(&self, values: &[f64], idx: usize, a: Action) -> f64 {
        let rows = self.rows_for(idx, a);
        let n = self.users.len();
        let mut acc = 0.0;
        walk(&rows[..n], &self.space.strides, 0, 0, 1.0, &mut |j, pr| {
            acc += pr * values[j]
        });
        acc
    }

    /// `C(x) + α E[V(x') | x, a]`.
    #[inline]
    pub fn q_value(&self, values: &[f64], idx: usize, a: Action, alpha: f64) -> f64 {
        self.cost(idx) + alpha * self.expected(values, idx, a)
    }

    /// Minimizing action and its Q-value. Ties within a relative `1e-12`
    /// go to idle, then to the lowest user index. Serving a synchronized
    /// user is identical to idling and is skipped.
    pub fn greedy(&self, values: &[f64], idx: usize, alpha: f64) -> (Action, f64) {
        let mut best_a = Action::Idle;
        let mut best_q = self.q_value(values, idx, Action::Idle, alpha);
        for (n, &x) in self.digits_of(idx).iter().enumerate() {
            if x == 0 {
                continue;
            }
            let q = self.q_value(values, idx, Action::User(n), alpha);
            if q < best_q - tie_eps(best_q) {
                best_q = q;
                best_a = Action::User(n);
            }
        }
        (best_a, best_q)
    }

    /// Greedy max-age action, the starting policy of the structured iteration.
    fn max_age_action(&self, idx: usize) -> Action {
        let mut best: Option<(usize, u16)> = None;
        for (n, &x) in self.digits_of(idx).iter().enumerate() {
            if x > 0 && best.is_none_or(|(_, bx)| x > bx) {
                best = Some((n, x));
            }
        }
        best.map_or(Action::Idle, |(n, _)| Action::User(n))
    }
}

#[inline]
fn tie_eps(q: f64) -> f64 {
    1e-12 * (1.0 + libm::fabs(q))
}

fn walk(rows: &[&Row], strides: &[usize], level: usize, idx: usize, prob: f64, f: &mut dyn FnMut(usize, f64)) {
    if level == rows.len() {
        f(idx, prob);
        return;
    }
    for (x, pr) in rows[level].entries() {
        walk(
            rows,
            strides,
            level + 1,
            idx + x as usize * strides[level],
            prob * pr,
            f,
        );
    }
}

/// Value function over the truncated space.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub alpha: f64,
    pub values: Vec<f64>,
}

impl ValueTable {
    pub fn get(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    /// Values shifted so that the all-synchronized state is zero.
    pub fn relative(&self) -> Vec<f64> {
        let base = self.values[0];
        self.values.iter().map(|v| v - base).collect()
    }
}

/// Deterministic map from truncated states to actions.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryPolicy {
    space: TruncatedSpace,
    actions: Vec<Action>,
}

impl StationaryPolicy {
    pub fn new(space: TruncatedSpace, actions: Vec<Action>) -> Result<Self> {
        if actions.len() != space.len() {
            return Err(Error::InvalidParameter {
                name: "policy",
                reason: "one action per state is required",
            });
        }
        if let Some(n) = actions
            .iter()
            .filter_map(|a| a.user())
            .find(|&n| n >= space.num_users())
        {
            return Err(Error::UserOutOfRange {
                user: n,
                users: space.num_users(),
            });
        }
        Ok(Self { space, actions })
    }

    pub fn space(&self) -> &TruncatedSpace {
        &self.space
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn action_at(&self, idx: usize) -> Action {
        self.actions[idx]
    }

    /// Action for untruncated ages, looked up at `min(s, m)`.
    pub fn action_for(&self, ages: &[u64]) -> Action {
        self.actions[self.space.clamped_index(ages)]
    }
}

impl Scheduler for StationaryPolicy {
    fn name(&self) -> &str {
        "mdp"
    }

    fn decide(&self, state: &NetworkState, _bandwidth: usize, out: &mut Vec<usize>) {
        out.clear();
        if let Action::User(n) = self.action_for(state.aos()) {
            if state.aos()[n] > 0 {
                out.push(n);
            }
        }
    }
}

/// Discount, tolerance and iteration cap shared by the solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub alpha: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl SolverOptions {
    pub fn new(alpha: f64) -> Self {
        Self {
            alpha,
            tolerance: 1e-10,
            max_iterations: 200_000,
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                reason: "discount must lie in (0, 1)",
            });
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter {
                name: "tolerance",
                reason: "must be positive",
            });
        }
        Ok(())
    }
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self::new(0.99)
    }
}

/// Output of the MDP solvers.
#[derive(Debug, Clone)]
pub struct MdpSolution {
    pub policy: StationaryPolicy,
    pub values: ValueTable,
    pub iterations: usize,
    /// Sup-norm change in the last iteration.
    pub residual: f64,
    /// States where the minimization was actually carried out in the last
    /// sweep (structured iteration only; equals the state count otherwise).
    pub evaluated_states: usize,
}

/// Discounted value iteration from `V = 0` until the sup-norm change of one
/// Bellman update is at most the tolerance.
pub fn discounted_value_iteration(model: &MdpModel, opts: SolverOptions) -> Result<MdpSolution> {
    opts.validate()?;
    let len = model.num_states();
    let mut v = vec![0.0; len];
    let mut next = vec![0.0; len];
    let mut actions = vec![Action::Idle; len];
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut residual: f64 = 0.0;
        for idx in 0..len {
            let (a, q) = model.greedy(&v, idx, opts.alpha);
            actions[idx] = a;
            residual = residual.max(libm::fabs(q - v[idx]));
            next[idx] = q;
        }
        core::mem::swap(&mut v, &mut next);
        if residual <= opts.tolerance {
            // policy greedy with respect to the returned values
            for (idx, a) in actions.iter_mut().enumerate() {
                *a = model.greedy(&v, idx, opts.alpha).0;
            }
            return Ok(MdpSolution {
                policy: StationaryPolicy::new(model.space().clone(), actions)?,
                values: ValueTable {
                    alpha: opts.alpha,
                    values: v,
                },
                iterations,
                residual,
                evaluated_states: len,
            });
        }
        if iterations >= opts.max_iterations {
            return Err(Error::NotConverged {
                solver: "discounted value iteration",
                iterations,
                residual,
            });
        }
    }
}

/// Relative policy iteration exploiting the switching structure.
///
/// Starts from the max-age policy with `V(x) = Σ x_n`. Each round walks the
/// states in lexicographic order; a state not yet assigned in the round is
/// minimized over actions, and the chosen user `a` is then assigned to
/// every `x + z e_a` without minimization. All states get one Bellman
/// update under their assigned action and values are renormalized so the
/// all-zero state is 0. Stops once the policy repeats and the values have
/// settled to within the tolerance.
pub fn structural_policy_iteration(model: &MdpModel, opts: SolverOptions) -> Result<MdpSolution> {
    opts.validate()?;
    let space = model.space();
    if space.cap() < 2 {
        return Err(Error::InvalidParameter {
            name: "m",
            reason: "structured iteration needs m >= 2",
        });
    }
    let len = model.num_states();
    let cap = space.cap();
    let mut policy: Vec<Action> = (0..len).map(|i| model.max_age_action(i)).collect();
    let mut v: Vec<f64> = (0..len).map(|i| model.cost(i) * model.users().len() as f64).collect();
    let mut next_policy = vec![Action::Idle; len];
    let mut tmp = vec![0.0; len];
    let mut assigned = vec![false; len];
    let mut iterations = 0;
    loop {
        iterations += 1;
        assigned.iter_mut().for_each(|a| *a = false);
        let mut evaluated = 0;
        for idx in 0..len {
            if assigned[idx] {
                continue;
            }
            evaluated += 1;
            let (a, q) = model.greedy(&v, idx, opts.alpha);
            next_policy[idx] = a;
            tmp[idx] = q;
            assigned[idx] = true;
            if let Action::User(n) = a {
                let stride = space.strides[n];
                let mut x = space.digit(idx, n);
                let mut j = idx;
                while x < cap {
                    x += 1;
                    j += stride;
                    if !assigned[j] {
                        next_policy[j] = a;
                        tmp[j] = model.q_value(&v, j, a, opts.alpha);
                        assigned[j] = true;
                    }
                }
            }
        }
        let base = tmp[0];
        let mut residual: f64 = 0.0;
        for idx in 0..len {
            let nv = tmp[idx] - base;
            residual = residual.max(libm::fabs(nv - v[idx]));
            v[idx] = nv;
        }
        let stable = next_policy == policy;
        core::mem::swap(&mut policy, &mut next_policy);
        if stable && residual <= opts.tolerance {
            return Ok(MdpSolution {
                policy: StationaryPolicy::new(space.clone(), policy)?,
                values: ValueTable {
                    alpha: opts.alpha,
                    values: v,
                },
                iterations,
                residual,
                evaluated_states: evaluated,
            });
        }
        if iterations >= opts.max_iterations {
            return Err(Error::NotConverged {
                solver: "structured policy iteration",
                iterations,
                residual,
            });
        }
    }
}

/// Textbook policy iteration with no structural shortcuts: full policy
/// evaluation (Gauss-Seidel sweeps to the tolerance), then greedy
/// improvement that only switches on a strict gain.
pub fn plain_policy_iteration(model: &MdpModel, opts: SolverOptions) -> Result<MdpSolution> {
    opts.validate()?;
    let len = model.num_states();
    let mut policy: Vec<Action> = (0..len).map(|i| model.max_age_action(i)).collect();
    let mut v = vec![0.0; len];
    let mut iterations = 0;
    let eval_tol = opts.tolerance * (1.0 - opts.alpha) * 1e-2;
    loop {
        iterations += 1;
        let mut sweeps = 0;
        loop {
            sweeps += 1;
            let mut change: f64 = 0.0;
            for idx in 0..len {
                let q = model.q_value(&v, idx, policy[idx], opts.alpha);
                change = change.max(libm::fabs(q - v[idx]));
                v[idx] = q;
            }
            if change <= eval_tol {
                break;
            }
            if sweeps >= opts.max_iterations {
                return Err(Error::NotConverged {
                    solver: "policy evaluation",
                    iterations: sweeps,
                    residual: change,
                });
            }
        }
        let mut changed = false;
        for idx in 0..len {
            let current = model.q_value(&v, idx, policy[idx], opts.alpha);
            let (a, q) = model.greedy(&v, idx, opts.alpha);
            if a != policy[idx] && q < current - tie_eps(current) {
                policy[idx] = a;
                changed = true;
            }
        }
        if !changed {
            return Ok(MdpSolution {
                policy: StationaryPolicy::new(model.space().clone(), policy)?,
                values: ValueTable {
                    alpha: opts.alpha,
                    values: v,
                },
                iterations,
                residual: 0.0,
                evaluated_states: len,
            });
        }
        if iterations >= opts.max_iterations {
            return Err(Error::NotConverged {
                solver: "policy iteration",
                iterations,
                residual: f64::NAN,
            });
        }
    }
}

/// Which structural property a violation breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructureProperty {
    /// `V(x + z e_n) >= V(x)`.
    Monotonicity,
    /// `V(x + z_i e_i - z_j e_j) - V(x - z_j e_j) >= V(x + z_i e_i) - V(x)`.
    Submodularity,
    /// Serving `n` at `x` stays optimal at `x + z e_n`.
    SwitchingPersistence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureViolation {
    pub property: StructureProperty,
    pub state: Vec<u64>,
    /// Violated inequality's shortfall (positive).
    pub amount: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StructureReport {
    pub violations: Vec<StructureViolation>,
    pub monotonicity_checks: usize,
    pub submodularity_checks: usize,
    pub persistence_checks: usize,
    /// Failures of the mirrored inequality
    /// `V(x + z_i e_i) - V(x) >= V(x + z_i e_i - z_j e_j) - V(x - z_j e_j)`
    /// over the same index set as the submodularity checks.
    pub increasing_difference_violations: usize,
}

impl StructureReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, property: StructureProperty) -> usize {
        self.violations.iter().filter(|v| v.property == property).count()
    }
}

/// Exhaustively checks monotonicity, submodularity and switching
/// persistence of a value table. Persistence is checked for the policy
/// that is greedy with respect to `values`.
pub fn verify_structure(model: &MdpModel, values: &ValueTable) -> Result<StructureReport> {
    let space = model.space();
    if values.values.len() != space.len() {
        return Err(Error::InvalidParameter {
            name: "values",
            reason: "value table does not match the state space",
        });
    }
    let v = &values.values;
    let scale = v.iter().fold(1.0f64, |m, x| m.max(libm::fabs(*x)));
    let eps = 1e-9 * scale;
    let n_users = space.num_users();
    let cap = space.cap();
    let mut report = StructureReport::default();

    for idx in 0..space.len() {
        for n in 0..n_users {
            let xn = space.digit(idx, n);
            for z in 1..=(cap - xn) {
                let j = idx + z as usize * space.strides[n];
                report.monotonicity_checks += 1;
                let gap = v[idx] - v[j];
                if gap > eps {
                    report.violations.push(StructureViolation {
                        property: StructureProperty::Monotonicity,
                        state: space.state(idx),
                        amount: gap,
                    });
                }
            }
        }
    }

    for idx in 0..space.len() {
        for i in 0..n_users {
            let xi = space.digit(idx, i);
            for j in 0..n_users {
                if i == j {
                    continue;
                }
                let xj = space.digit(idx, j);
                for zi in 1..=(cap - xi) {
                    let up = idx + zi as usize * space.strides[i];
                    for zj in 1..=xj {
                        let down = idx - zj as usize * space.strides[j];
                        let both = up - zj as usize * space.strides[j];
                        report.submodularity_checks += 1;
                        let lhs = v[both] - v[down];
                        let rhs = v[up] - v[idx];
                        if lhs - rhs > eps {
                            report.increasing_difference_violations += 1;
                        }
                        if rhs - lhs > eps {
                            report.violations.push(StructureViolation {
                                property: StructureProperty::Submodularity,
                                state: space.state(idx),
                                amount: rhs - lhs,
                            });
                        }
                    }
                }
            }
        }
    }

    for idx in 0..space.len() {
        let Action::User(n) = model.greedy(v, idx, values.alpha).0 else {
            continue;
        };
        let xn = space.digit(idx, n);
        for z in 1..=(cap - xn) {
            let j = idx + z as usize * space.strides[n];
            report.persistence_checks += 1;
            let (_, best) = model.greedy(v, j, values.alpha);
            let q = model.q_value(v, j, Action::User(n), values.alpha);
            if q - best > eps {
                report.violations.push(StructureViolation {
                    property: StructureProperty::SwitchingPersistence,
                    state: space.state(j),
                    amount: q - best,
                });
            }
        }
    }
    Ok(report)
}
