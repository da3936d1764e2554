use crate::csp::{Instance, SoftAssignment};
use crate::model::forward::ConstraintGroups;
use crate::scalar::Scalar;
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;
use std::sync::Arc;

/// Probabilities are clamped here before the log; the gradient vanishes
/// below the floor.
pub(crate) const PROB_FLOOR: f64 = 1e-8;

/// Mean negative log-likelihood of constraint satisfaction under independent
/// sampling from the soft assignment. Zero for an empty constraint set.
pub fn loss_csp<S: Scalar>(soft: &SoftAssignment<S>, inst: &Instance) -> S {
    let constraints = inst.constraints();
    if constraints.is_empty() {
        return S::zero();
    }
    let rels = inst.language().relations();
    let floor = S::cast(PROB_FLOOR);
    let mut total = S::zero();
    for c in constraints {
        let p = rels[c.rel].satisfaction_probability(soft.row(c.u), soft.row(c.v));
        total += -(p.max(floor)).ln();
    }
    total / S::from_usize(constraints.len()).unwrap()
}

/// Discounted sum of per-iteration losses: sum_t discount^(T-t) * loss(t).
pub fn loss_discounted<S: Scalar>(softs: &[SoftAssignment<S>], inst: &Instance, discount: S) -> S {
    let t_max = softs.len();
    let mut total = S::zero();
    for (i, soft) in softs.iter().enumerate() {
        let weight = discount.powi((t_max - 1 - i) as i32);
        total += weight * loss_csp(soft, inst);
    }
    total
}

/// Independent-set objective: (offset + constraint loss) * (1 + size loss),
/// where the size loss is the mean probability of staying out of the set.
pub fn loss_mis<S: Scalar>(soft: &SoftAssignment<S>, inst: &Instance, offset: S) -> S {
    let n = inst.num_vars();
    assert_eq!(soft.domain_size(), 2, "independent-set loss needs a binary domain");
    let mut outside = S::zero();
    for v in 0..n {
        outside += S::one() - soft.row(v)[1];
    }
    let size_loss = outside / S::from_usize(n).unwrap();
    (offset + loss_csp(soft, inst)) * (S::one() + size_loss)
}

/// Which training objective the loss nodes encode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum LossKind {
    Csp,
    Mis,
}

/// Record the per-iteration loss for one (possibly batched) soft assignment
/// node. Instances in a union are averaged uniformly regardless of their
/// constraint counts.
pub(crate) fn record_loss<S: Scalar>(
    tape: &mut Tape<S>,
    soft: NodeId,
    groups: &ConstraintGroups,
    kind: LossKind,
    mis_offset: S,
) -> NodeId {
    let per_instance_csp = record_csp_per_instance(tape, soft, groups);
    match kind {
        LossKind::Csp => tape.mean_all(per_instance_csp),
        LossKind::Mis => {
            // Column 1 is set membership; average (1 - p) per instance.
            let member = tape.slice_cols(soft, 1, 2);
            let outside = tape.affine(member, -S::one(), S::one());
            let size_per_inst = tape.segment_mean(
                outside,
                Arc::clone(&groups.var_instance_ids),
                groups.num_instances,
            );
            let csp_shifted = tape.affine(per_instance_csp, S::one(), mis_offset);
            let size_shifted = tape.affine(size_per_inst, S::one(), S::one());
            let combined = tape.mul(csp_shifted, size_shifted);
            tape.mean_all(combined)
        }
    }
}

/// Per-instance mean of -log satisfaction probability, as a B x 1 node.
/// Instances without constraints contribute zero (the empty-segment rule).
fn record_csp_per_instance<S: Scalar>(
    tape: &mut Tape<S>,
    soft: NodeId,
    groups: &ConstraintGroups,
) -> NodeId {
    let mut parts = Vec::new();
    for group in &groups.relations {
        let pu = tape.gather_rows(soft, Arc::clone(&group.u_vars));
        let pv = tape.gather_rows(soft, Arc::clone(&group.v_vars));
        let char_matrix = tape.leaf(char_matrix_tensor::<S>(groups, group.rel));
        let weighted = tape.matmul(pu, char_matrix);
        let joint = tape.mul(weighted, pv);
        let prob = tape.row_sum(joint);
        parts.push(prob);
    }
    if parts.is_empty() {
        // No constraints at all: the loss is defined as zero per instance.
        return tape.leaf(Tensor::zeros(groups.num_instances, 1));
    }
    let probs = tape.concat_rows(&parts);
    let safe = tape.clamp_min(probs, S::cast(PROB_FLOOR));
    let logs = tape.log(safe);
    let neg = tape.affine(logs, -S::one(), S::zero());
    tape.segment_mean(
        neg,
        Arc::clone(&groups.constraint_instance_ids),
        groups.num_instances,
    )
}

fn char_matrix_tensor<S: Scalar>(groups: &ConstraintGroups, rel: usize) -> Tensor<S> {
    let relation = &groups.language.relations()[rel];
    let d = relation.domain_size();
    let data = relation
        .matrix()
        .iter()
        .map(|&v| if v != 0 { S::one() } else { S::zero() })
        .collect();
    Tensor::from_vec(d, d, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csp::{ConstraintLanguage, Instance};

    fn single_edge(lang: std::sync::Arc<ConstraintLanguage>) -> Instance {
        Instance::from_edges(lang, 2, &[(0, 1)]).unwrap()
    }

    #[test]
    fn satisfied_one_hot_loss_is_zero() {
        let inst = single_edge(ConstraintLanguage::max_cut());
        let soft = SoftAssignment::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(loss_csp(&soft, &inst), 0.0);
    }

    #[test]
    fn uniform_cut_edge_loss_is_ln_two() {
        let inst = single_edge(ConstraintLanguage::max_cut());
        let soft = SoftAssignment::new(2, 2, vec![0.5; 4]);
        assert!((loss_csp(&soft, &inst) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn uniform_three_col_triangle_loss() {
        // Satisfaction probability of uniform rows is 2/3 per edge, so the
        // loss is -ln(2/3) regardless of the edge count.
        let lang = ConstraintLanguage::three_col();
        let inst = Instance::from_edges(lang, 3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let third = 1.0 / 3.0;
        let soft = SoftAssignment::new(3, 3, vec![third; 9]);
        let expected = -(2.0f64 / 3.0).ln();
        assert!((loss_csp(&soft, &inst) - expected).abs() < 1e-12);
    }

    #[test]
    fn empty_constraint_loss_is_zero() {
        let inst = Instance::new(ConstraintLanguage::max_cut(), 3, vec![]).unwrap();
        let soft = SoftAssignment::new(3, 2, vec![0.5; 6]);
        assert_eq!(loss_csp(&soft, &inst), 0.0);
    }

    #[test]
    fn discounted_single_iteration_is_plain_loss() {
        let inst = single_edge(ConstraintLanguage::max_cut());
        let soft = SoftAssignment::new(2, 2, vec![0.5; 4]);
        let single = loss_discounted(std::slice::from_ref(&soft), &inst, 0.95);
        assert_eq!(single, loss_csp(&soft, &inst));
    }

    #[test]
    fn discount_zero_keeps_only_final_iteration() {
        let inst = single_edge(ConstraintLanguage::max_cut());
        let early = SoftAssignment::new(2, 2, vec![0.9, 0.1, 0.9, 0.1]);
        let late = SoftAssignment::new(2, 2, vec![0.5; 4]);
        let total = loss_discounted(&[early, late.clone()], &inst, 0.0);
        assert_eq!(total, loss_csp(&late, &inst));
    }

    #[test]
    fn discount_one_sums_constant_losses() {
        let inst = single_edge(ConstraintLanguage::max_cut());
        let soft = SoftAssignment::new(2, 2, vec![0.5; 4]);
        let repeated = vec![soft.clone(); 5];
        let total = loss_discounted(&repeated, &inst, 1.0);
        assert!((total - 5.0 * loss_csp(&soft, &inst)).abs() < 1e-12);
    }

    #[test]
    fn mis_edgeless_all_outside_is_twice_offset() {
        let inst = Instance::new(ConstraintLanguage::max_is(), 4, vec![]).unwrap();
        // Everything assigned probability 0 of membership.
        let soft = SoftAssignment::new(4, 2, vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        for offset in [0.1f64, 1.0] {
            assert!((loss_mis(&soft, &inst, offset) - 2.0 * offset).abs() < 1e-12);
        }
    }

    #[test]
    fn mis_infeasible_set_is_dominated_by_constraint_term() {
        let inst = single_edge(ConstraintLanguage::max_is());
        let soft = SoftAssignment::new(2, 2, vec![0.0, 1.0, 0.0, 1.0]);
        // Satisfaction probability is exactly 0, clamped to the floor.
        let expected_csp = -(PROB_FLOOR).ln();
        let loss = loss_mis(&soft, &inst, 1.0);
        assert!((loss - (1.0 + expected_csp)).abs() < 1e-9);
        assert!(loss > expected_csp);
    }

    #[test]
    fn mis_offset_ratio_matches_closed_form() {
        let inst = single_edge(ConstraintLanguage::max_is());
        let soft = SoftAssignment::new(2, 2, vec![0.3, 0.7, 0.8, 0.2]);
        let csp = loss_csp(&soft, &inst);
        let size = (1.0 - 0.7 + 1.0 - 0.2) / 2.0;
        for offset in [0.1f64, 1.0] {
            let expected = (offset + csp) * (1.0 + size);
            assert!((loss_mis(&soft, &inst, offset) - expected).abs() < 1e-12);
        }
    }
}
