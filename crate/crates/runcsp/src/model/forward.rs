use crate::csp::{HardAssignment, Instance, Relation, SoftAssignment};
use crate::eval::is_repair;
use crate::model::params::{Parameters, GATES};
use crate::model::{ModelConfig, ModelError, BATCH_NORM_EPS};
use crate::scalar::Scalar;
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// Constraints of one instance (or union) grouped by relation, with the
/// index arrays the forward pass and losses route through.
pub(crate) struct ConstraintGroups {
    pub language: Arc<crate::csp::ConstraintLanguage>,
    pub relations: Vec<RelationGroup>,
    /// Segment id (receiving variable) for each stacked message row; per
    /// relation group the to-u block precedes the to-v block.
    pub message_targets: Arc<Vec<usize>>,
    /// Owning instance of each constraint, in relation-grouped order.
    pub constraint_instance_ids: Arc<Vec<usize>>,
    /// Owning instance of each variable.
    pub var_instance_ids: Arc<Vec<usize>>,
    pub num_instances: usize,
    pub num_vars: usize,
    pub num_constraints: usize,
}

pub(crate) struct RelationGroup {
    pub rel: usize,
    pub symmetric: bool,
    pub u_vars: Arc<Vec<usize>>,
    pub v_vars: Arc<Vec<usize>>,
}

impl ConstraintGroups {
    pub(crate) fn single(inst: &Instance) -> Self {
        Self::build(inst, &[0])
    }

    /// `var_offsets[i]` is the first variable of member i inside the union.
    pub(crate) fn build(union: &Instance, var_offsets: &[usize]) -> Self {
        let num_instances = var_offsets.len();
        let member_of = |var: usize| -> usize {
            var_offsets.partition_point(|&start| start <= var) - 1
        };

        let rel_count = union.language().relations().len();
        let mut u_by_rel: Vec<Vec<usize>> = vec![Vec::new(); rel_count];
        let mut v_by_rel: Vec<Vec<usize>> = vec![Vec::new(); rel_count];
        let mut inst_by_rel: Vec<Vec<usize>> = vec![Vec::new(); rel_count];
        for c in union.constraints() {
            u_by_rel[c.rel].push(c.u);
            v_by_rel[c.rel].push(c.v);
            inst_by_rel[c.rel].push(member_of(c.u));
        }

        let mut relations = Vec::new();
        let mut message_targets = Vec::with_capacity(2 * union.num_constraints());
        let mut constraint_instance_ids = Vec::with_capacity(union.num_constraints());
        for rel in 0..rel_count {
            if u_by_rel[rel].is_empty() {
                continue;
            }
            message_targets.extend_from_slice(&u_by_rel[rel]);
            message_targets.extend_from_slice(&v_by_rel[rel]);
            constraint_instance_ids.extend_from_slice(&inst_by_rel[rel]);
            relations.push(RelationGroup {
                rel,
                symmetric: union.language().relations()[rel].symmetric(),
                u_vars: Arc::new(std::mem::take(&mut u_by_rel[rel])),
                v_vars: Arc::new(std::mem::take(&mut v_by_rel[rel])),
            });
        }

        let var_instance_ids = (0..union.num_vars()).map(member_of).collect();

        ConstraintGroups {
            language: Arc::clone(union.language()),
            relations,
            message_targets: Arc::new(message_targets),
            constraint_instance_ids: Arc::new(constraint_instance_ids),
            var_instance_ids: Arc::new(var_instance_ids),
            num_instances,
            num_vars: union.num_vars(),
            num_constraints: union.num_constraints(),
        }
    }
}

/// How the short-term states start.
pub enum StateInit<S> {
    /// Sample from N(0,1) deterministically; boosted copies use rng streams.
    Seed(u64),
    /// Inject explicit n x k states (tests, component-independence checks).
    Given(Tensor<S>),
}

/// Initial short-term states for one boosted copy.
fn initial_states<S: Scalar>(num_vars: usize, k: usize, seed: u64, copy: u64) -> Tensor<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(copy);
    let data = (0..num_vars * k).map(|_| S::standard_normal(&mut rng)).collect();
    Tensor::from_vec(num_vars, k, data)
}

/// Node ids of the registered parameters, slot-aligned with
/// `Parameters::tensors`.
pub(crate) struct ParamNodes {
    pub message: Vec<NodeId>,
    pub lstm_input: NodeId,
    pub lstm_recurrent: NodeId,
    pub lstm_bias: NodeId,
    pub readout: NodeId,
    pub bn_scale: NodeId,
    pub bn_shift: NodeId,
}

pub(crate) fn register_params<S: Scalar>(tape: &mut Tape<S>, params: &Parameters<S>) -> ParamNodes {
    let mut slot = 0;
    let mut next = |tape: &mut Tape<S>, t: &Tensor<S>| {
        let id = tape.param(slot, t.clone());
        slot += 1;
        id
    };
    let message = params.message.iter().map(|m| next(tape, m)).collect();
    ParamNodes {
        message,
        lstm_input: next(tape, &params.lstm_input),
        lstm_recurrent: next(tape, &params.lstm_recurrent),
        lstm_bias: next(tape, &params.lstm_bias),
        readout: next(tape, &params.readout),
        bn_scale: next(tape, &params.bn_scale),
        bn_shift: next(tape, &params.bn_shift),
    }
}

/// Record the full recurrent pass on the tape; returns the per-iteration
/// soft-assignment nodes, in iteration order.
pub(crate) fn record_forward<S: Scalar>(
    tape: &mut Tape<S>,
    nodes: &ParamNodes,
    cfg: &ModelConfig,
    groups: &ConstraintGroups,
    init_hidden: &Tensor<S>,
    iters: usize,
) -> Vec<NodeId> {
    let k = cfg.state_size;
    let n = groups.num_vars;
    let eps = S::cast(BATCH_NORM_EPS);

    let mut hidden = tape.leaf(init_hidden.clone());
    let mut cell = tape.leaf(Tensor::zeros(n, k));
    let mut soft_nodes = Vec::with_capacity(iters);

    for _ in 0..iters {
        // Messages per relation, stacked to-u then to-v.
        let mut parts = Vec::with_capacity(2 * groups.relations.len());
        for group in &groups.relations {
            let su = tape.gather_rows(hidden, Arc::clone(&group.u_vars));
            let sv = tape.gather_rows(hidden, Arc::clone(&group.v_vars));
            let matrix = nodes.message[group.rel];
            if group.symmetric {
                let fwd = tape.concat_cols(su, sv);
                let rev = tape.concat_cols(sv, su);
                parts.push(tape.matmul(fwd, matrix));
                parts.push(tape.matmul(rev, matrix));
            } else {
                let stacked = tape.concat_cols(su, sv);
                let both = tape.matmul(stacked, matrix);
                parts.push(tape.slice_cols(both, 0, k));
                parts.push(tape.slice_cols(both, k, 2 * k));
            }
        }
        let messages = tape.concat_rows(&parts);
        let pooled = tape.segment_mean(messages, Arc::clone(&groups.message_targets), n);
        let normed = tape.batch_norm(pooled, nodes.bn_scale, nodes.bn_shift, eps);

        // LSTM update; gate order input/forget/candidate/output.
        let zx = tape.matmul(normed, nodes.lstm_input);
        let zh = tape.matmul(hidden, nodes.lstm_recurrent);
        let zsum = tape.add(zx, zh);
        let z = tape.add_row_broadcast(zsum, nodes.lstm_bias);
        let gate_in = tape.slice_cols(z, 0, k);
        let gate_forget = tape.slice_cols(z, k, 2 * k);
        let gate_cand = tape.slice_cols(z, 2 * k, 3 * k);
        let gate_out = tape.slice_cols(z, 3 * k, GATES * k);
        let i = tape.sigmoid(gate_in);
        let f = tape.sigmoid(gate_forget);
        let g = tape.tanh(gate_cand);
        let o = tape.sigmoid(gate_out);
        let kept = tape.mul(f, cell);
        let fresh = tape.mul(i, g);
        cell = tape.add(kept, fresh);
        let squashed = tape.tanh(cell);
        hidden = tape.mul(o, squashed);

        soft_nodes.push(record_readout(tape, nodes, cfg, hidden));
    }
    soft_nodes
}

/// Soft assignment from the current short-term states.
fn record_readout<S: Scalar>(
    tape: &mut Tape<S>,
    nodes: &ParamNodes,
    cfg: &ModelConfig,
    hidden: NodeId,
) -> NodeId {
    let weights = tape.transpose(nodes.readout);
    let logits = tape.matmul(hidden, weights);
    if cfg.sigmoid_readout {
        let p = tape.sigmoid(logits);
        let complement = tape.affine(p, -S::one(), S::one());
        tape.concat_cols(p, complement)
    } else {
        tape.softmax_rows(logits)
    }
}

/// One message exchange along a single constraint; mirrors the batched pass.
pub fn message_step<S: Scalar>(
    params: &Parameters<S>,
    rel: &Relation,
    s_u: &[S],
    s_v: &[S],
) -> (Vec<S>, Vec<S>) {
    let matrix = &params.message[rel.id()];
    let k = s_u.len();
    assert_eq!(s_v.len(), k, "endpoint states must share the state size");
    assert_eq!(matrix.rows(), 2 * k, "message matrix height mismatch");
    let stack = |a: &[S], b: &[S]| {
        let mut row = Vec::with_capacity(2 * k);
        row.extend_from_slice(a);
        row.extend_from_slice(b);
        Tensor::from_vec(1, 2 * k, row)
    };
    if rel.symmetric() {
        let to_u = stack(s_u, s_v).matmul(matrix);
        let to_v = stack(s_v, s_u).matmul(matrix);
        (to_u.data().to_vec(), to_v.data().to_vec())
    } else {
        let both = stack(s_u, s_v).matmul(matrix);
        (both.data()[..k].to_vec(), both.data()[k..].to_vec())
    }
}

// ---------------------------------------------------------------------------
// Tape-free evaluation path. Mirrors the recorded ops loop for loop so the
// two produce the same values; the cross-check lives in the tests.
// ---------------------------------------------------------------------------

fn gather_rows<S: Scalar>(t: &Tensor<S>, ids: &[usize]) -> Tensor<S> {
    let mut out = Tensor::zeros(ids.len(), t.cols());
    for (r, &src) in ids.iter().enumerate() {
        out.row_mut(r).copy_from_slice(t.row(src));
    }
    out
}

fn segment_mean<S: Scalar>(t: &Tensor<S>, ids: &[usize], segments: usize) -> Tensor<S> {
    let mut out = Tensor::zeros(segments, t.cols());
    let mut counts = vec![0usize; segments];
    for (r, &seg) in ids.iter().enumerate() {
        counts[seg] += 1;
        let row = t.row(r);
        let acc = out.row_mut(seg);
        for (o, &v) in acc.iter_mut().zip(row.iter()) {
            *o += v;
        }
    }
    for (seg, &count) in counts.iter().enumerate() {
        if count > 1 {
            let inv = S::one() / S::from_usize(count).unwrap();
            for v in out.row_mut(seg) {
                *v = *v * inv;
            }
        }
    }
    out
}

fn batch_norm<S: Scalar>(t: &Tensor<S>, gamma: &Tensor<S>, beta: &Tensor<S>, eps: S) -> Tensor<S> {
    let n = S::from_usize(t.rows()).unwrap();
    let cols = t.cols();
    let mut mean = vec![S::zero(); cols];
    for r in 0..t.rows() {
        for (m, &v) in mean.iter_mut().zip(t.row(r).iter()) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m = *m / n;
    }
    let mut var = vec![S::zero(); cols];
    for r in 0..t.rows() {
        for ((va, &m), &v) in var.iter_mut().zip(mean.iter()).zip(t.row(r)) {
            let diff = v - m;
            *va += diff * diff;
        }
    }
    let inv_std: Vec<S> = var.iter().map(|&va| S::one() / (va / n + eps).sqrt()).collect();
    let mut out = Tensor::zeros(t.rows(), cols);
    for r in 0..t.rows() {
        let src = t.row(r);
        let dst = out.row_mut(r);
        for c in 0..cols {
            dst[c] = gamma.get(0, c) * ((src[c] - mean[c]) * inv_std[c]) + beta.get(0, c);
        }
    }
    out
}

fn concat_cols<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Tensor<S> {
    let mut out = Tensor::zeros(a.rows(), a.cols() + b.cols());
    for r in 0..a.rows() {
        out.row_mut(r)[..a.cols()].copy_from_slice(a.row(r));
        out.row_mut(r)[a.cols()..].copy_from_slice(b.row(r));
    }
    out
}

fn sigmoid<S: Scalar>(v: S) -> S {
    S::one() / (S::one() + (-v).exp())
}

/// Run the recurrent pass without recording, handing each iteration's soft
/// assignment to the callback.
fn eval_forward<S: Scalar>(
    params: &Parameters<S>,
    cfg: &ModelConfig,
    groups: &ConstraintGroups,
    init_hidden: Tensor<S>,
    iters: usize,
    mut on_soft: impl FnMut(usize, &SoftAssignment<S>),
) {
    let k = cfg.state_size;
    let n = groups.num_vars;
    let eps = S::cast(BATCH_NORM_EPS);

    let mut hidden = init_hidden;
    let mut cell = Tensor::zeros(n, k);
    let mut msg_rows = 0;
    for group in &groups.relations {
        msg_rows += 2 * group.u_vars.len();
    }

    for t in 0..iters {
        let mut messages = Tensor::zeros(msg_rows, k);
        let mut offset = 0;
        for group in &groups.relations {
            let su = gather_rows(&hidden, &group.u_vars);
            let sv = gather_rows(&hidden, &group.v_vars);
            let matrix = &params.message[group.rel];
            let rows = group.u_vars.len();
            if group.symmetric {
                let to_u = concat_cols(&su, &sv).matmul(matrix);
                let to_v = concat_cols(&sv, &su).matmul(matrix);
                for r in 0..rows {
                    messages.row_mut(offset + r).copy_from_slice(to_u.row(r));
                    messages.row_mut(offset + rows + r).copy_from_slice(to_v.row(r));
                }
            } else {
                let both = concat_cols(&su, &sv).matmul(matrix);
                for r in 0..rows {
                    messages.row_mut(offset + r).copy_from_slice(&both.row(r)[..k]);
                    messages
                        .row_mut(offset + rows + r)
                        .copy_from_slice(&both.row(r)[k..]);
                }
            }
            offset += 2 * rows;
        }

        let pooled = segment_mean(&messages, &groups.message_targets, n);
        let normed = batch_norm(&pooled, &params.bn_scale, &params.bn_shift, eps);

        let mut z = normed.matmul(&params.lstm_input);
        let zh = hidden.matmul(&params.lstm_recurrent);
        for r in 0..n {
            let dst = z.row_mut(r);
            for (c, d) in dst.iter_mut().enumerate() {
                *d = *d + zh.get(r, c) + params.lstm_bias.get(0, c);
            }
        }
        let mut new_hidden = Tensor::zeros(n, k);
        for r in 0..n {
            for c in 0..k {
                let i = sigmoid(z.get(r, c));
                let f = sigmoid(z.get(r, k + c));
                let g = z.get(r, 2 * k + c).tanh();
                let o = sigmoid(z.get(r, 3 * k + c));
                let new_cell = f * cell.get(r, c) + i * g;
                cell.set(r, c, new_cell);
                new_hidden.set(r, c, o * new_cell.tanh());
            }
        }
        hidden = new_hidden;

        let soft = eval_readout(params, cfg, &hidden);
        on_soft(t, &soft);
    }
}

fn eval_readout<S: Scalar>(
    params: &Parameters<S>,
    cfg: &ModelConfig,
    hidden: &Tensor<S>,
) -> SoftAssignment<S> {
    let n = hidden.rows();
    let logits = hidden.matmul_transpose(&params.readout);
    if cfg.sigmoid_readout {
        let mut probs = Vec::with_capacity(2 * n);
        for r in 0..n {
            let p = sigmoid(logits.get(r, 0));
            probs.push(p);
            probs.push(S::one() - p);
        }
        SoftAssignment::new(n, 2, probs)
    } else {
        let d = logits.cols();
        let mut probs = vec![S::zero(); n * d];
        for r in 0..n {
            let row = logits.row(r);
            let max = row.iter().cloned().fold(S::neg_infinity(), S::max);
            let out = &mut probs[r * d..(r + 1) * d];
            let mut sum = S::zero();
            for (o, &v) in out.iter_mut().zip(row.iter()) {
                *o = (v - max).exp();
                sum += *o;
            }
            for o in out.iter_mut() {
                *o = *o / sum;
            }
        }
        SoftAssignment::new(n, d, probs)
    }
}

// ---------------------------------------------------------------------------
// Public inference API.
// ---------------------------------------------------------------------------

/// Output of one network run (or of boosted inference).
///
/// For a plain [`forward`] run, `soft`/`hard`/`satisfied` hold the full
/// per-iteration history. Boosted runs with more than one copy keep only
/// the per-iteration best score across copies in `satisfied` and leave the
/// history vectors empty.
#[derive(Clone, Debug)]
pub struct RunResult<S> {
    pub soft: Vec<SoftAssignment<S>>,
    pub hard: Vec<HardAssignment>,
    /// Per-iteration objective score (satisfied constraints, or repaired
    /// set size under [`Objective::IndependentSetSize`]).
    pub satisfied: Vec<usize>,
    pub best_iteration: usize,
    pub best_copy: usize,
    /// The selected assignment; for the independent-set objective this is
    /// the repaired, conflict-free set.
    pub best: HardAssignment,
    /// Constraints satisfied by `best`.
    pub best_satisfied: usize,
    /// Objective score of `best`.
    pub best_score: usize,
}

/// What boosted inference maximizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    SatisfiedCount,
    /// Repair candidate sets first, then compare set sizes.
    IndependentSetSize,
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub runs: usize,
    pub iters: usize,
    pub seed: u64,
    /// Run at most this many copies per union (memory fallback); `None`
    /// processes all runs in one union.
    pub chunk: Option<usize>,
    pub objective: Objective,
}

impl SolveOptions {
    pub fn new(seed: u64) -> Self {
        SolveOptions {
            runs: 64,
            iters: 100,
            seed,
            chunk: None,
            objective: Objective::SatisfiedCount,
        }
    }
}

fn check_inputs<S: Scalar>(
    params: &Parameters<S>,
    cfg: &ModelConfig,
    inst: &Instance,
    iters: usize,
) -> Result<(), ModelError> {
    if !params.matches(cfg) {
        return Err(ModelError::ShapeMismatch);
    }
    if iters == 0 {
        return Err(ModelError::ZeroIterations);
    }
    if inst.num_vars() == 0 || inst.num_constraints() == 0 {
        return Err(ModelError::EmptyInstance);
    }
    Ok(())
}

fn score_candidate(inst: &Instance, hard: &HardAssignment, objective: Objective) -> usize {
    match objective {
        Objective::SatisfiedCount => inst.count_satisfied(hard).expect("length checked"),
        Objective::IndependentSetSize => {
            let candidate: Vec<usize> = (0..hard.len()).filter(|&v| hard.value(v) == 1).collect();
            is_repair(inst, &candidate).len()
        }
    }
}

fn finalize_candidate(inst: &Instance, hard: &HardAssignment, objective: Objective) -> HardAssignment {
    match objective {
        Objective::SatisfiedCount => hard.clone(),
        Objective::IndependentSetSize => {
            let candidate: Vec<usize> = (0..hard.len()).filter(|&v| hard.value(v) == 1).collect();
            let repaired = is_repair(inst, &candidate);
            let mut values = vec![0; hard.len()];
            for v in repaired {
                values[v] = 1;
            }
            HardAssignment::new(values)
        }
    }
}

/// Execute the network once on `inst`, collecting the per-iteration history
/// and selecting the best hard assignment (ties: earliest iteration).
pub fn forward<S: Scalar>(
    params: &Parameters<S>,
    cfg: &ModelConfig,
    inst: &Instance,
    iters: usize,
    init: StateInit<S>,
) -> Result<RunResult<S>, ModelError> {
    check_inputs(params, cfg, inst, iters)?;
    let groups = ConstraintGroups::single(inst);
    let init_hidden = match init {
        StateInit::Seed(seed) => initial_states(inst.num_vars(), cfg.state_size, seed, 0),
        StateInit::Given(t) => {
            if t.shape() != (inst.num_vars(), cfg.state_size) {
                return Err(ModelError::BadInitialStates {
                    got_rows: t.rows(),
                    got_cols: t.cols(),
                    rows: inst.num_vars(),
                    cols: cfg.state_size,
                });
            }
            t
        }
    };

    let mut soft_history = Vec::with_capacity(iters);
    let mut hard_history = Vec::with_capacity(iters);
    let mut satisfied = Vec::with_capacity(iters);
    eval_forward(params, cfg, &groups, init_hidden, iters, |_, soft| {
        let hard = soft.argmax();
        satisfied.push(inst.count_satisfied(&hard).expect("length checked"));
        soft_history.push(soft.clone());
        hard_history.push(hard);
    });

    let mut best_iteration = 0;
    for (t, &count) in satisfied.iter().enumerate() {
        if count > satisfied[best_iteration] {
            best_iteration = t;
        }
    }
    let best = hard_history[best_iteration].clone();
    let best_satisfied = satisfied[best_iteration];
    Ok(RunResult {
        soft: soft_history,
        hard: hard_history,
        satisfied,
        best_iteration,
        best_copy: 0,
        best,
        best_satisfied,
        best_score: best_satisfied,
    })
}

/// Boosted inference: all runs execute as disjoint copies inside one union
/// (or several chunked unions) and the best candidate wins. Ties break to
/// the earliest iteration, then the lowest copy index.
pub fn boosted_solve<S: Scalar>(
    params: &Parameters<S>,
    cfg: &ModelConfig,
    inst: &Instance,
    opts: &SolveOptions,
) -> Result<RunResult<S>, ModelError> {
    assert!(opts.runs >= 1, "need at least one run");

    // An edgeless graph cannot exchange messages; under the independent-set
    // objective the answer is simply every vertex.
    if inst.num_constraints() == 0 && opts.objective == Objective::IndependentSetSize {
        let n = inst.num_vars();
        let best = HardAssignment::new(vec![1; n]);
        return Ok(RunResult {
            soft: Vec::new(),
            hard: Vec::new(),
            satisfied: Vec::new(),
            best_iteration: 0,
            best_copy: 0,
            best,
            best_satisfied: 0,
            best_score: n,
        });
    }
    check_inputs(params, cfg, inst, opts.iters)?;

    if opts.runs == 1 {
        let mut result = forward(
            params,
            cfg,
            inst,
            opts.iters,
            StateInit::Seed(opts.seed),
        )?;
        if opts.objective == Objective::IndependentSetSize {
            rescore_for_set_size(inst, &mut result);
        }
        return Ok(result);
    }

    let n = inst.num_vars();
    let k = cfg.state_size;
    let chunk_size = opts.chunk.unwrap_or(opts.runs).max(1);

    let mut best_score = 0usize;
    let mut best_assignment: Option<HardAssignment> = None;
    let mut best_iteration = usize::MAX;
    let mut best_copy = usize::MAX;
    let mut per_iteration_best = vec![0usize; opts.iters];

    let mut copy = 0;
    while copy < opts.runs {
        let count = chunk_size.min(opts.runs - copy);
        let union = inst.disjoint_union(count);
        let groups = ConstraintGroups::build(&union, &(0..count).map(|i| i * n).collect::<Vec<_>>());

        let mut init = Tensor::zeros(count * n, k);
        for local in 0..count {
            let states = initial_states::<S>(n, k, opts.seed, (copy + local) as u64);
            for r in 0..n {
                init.row_mut(local * n + r).copy_from_slice(states.row(r));
            }
        }

        eval_forward(params, cfg, &groups, init, opts.iters, |t, soft| {
            for local in 0..count {
                let slice = soft.slice_vars(local * n, n);
                let hard = slice.argmax();
                let score = score_candidate(inst, &hard, opts.objective);
                per_iteration_best[t] = per_iteration_best[t].max(score);
                let global_copy = copy + local;
                let improves = score > best_score
                    || (score == best_score
                        && best_assignment.is_some()
                        && (t < best_iteration || (t == best_iteration && global_copy < best_copy)));
                if best_assignment.is_none() || improves {
                    best_score = score;
                    best_iteration = t;
                    best_copy = global_copy;
                    best_assignment = Some(finalize_candidate(inst, &hard, opts.objective));
                }
            }
        });
        copy += count;
    }

    let best = best_assignment.expect("at least one candidate was scored");
    let best_satisfied = inst.count_satisfied(&best).expect("length checked");
    Ok(RunResult {
        soft: Vec::new(),
        hard: Vec::new(),
        satisfied: per_iteration_best,
        best_iteration,
        best_copy,
        best,
        best_satisfied,
        best_score,
    })
}

/// Recompute a single-run history under the set-size objective.
fn rescore_for_set_size<S: Scalar>(inst: &Instance, result: &mut RunResult<S>) {
    let mut best_score = 0;
    let mut best_iteration = 0;
    for (t, hard) in result.hard.iter().enumerate() {
        let score = score_candidate(inst, hard, Objective::IndependentSetSize);
        result.satisfied[t] = score;
        if score > best_score {
            best_score = score;
            best_iteration = t;
        }
    }
    result.best_iteration = best_iteration;
    result.best = finalize_candidate(inst, &result.hard[best_iteration], Objective::IndependentSetSize);
    result.best_satisfied = inst.count_satisfied(&result.best).expect("length checked");
    result.best_score = best_score;
}
