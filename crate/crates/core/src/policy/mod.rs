//! Priority rules, capacity-constrained assignment, policy trees and policy
//! values.

pub mod assign;
pub mod rule;
pub mod tree;
pub mod value;

pub use assign::{
    objective_of, solve_assignment, solve_assignment_counts, AssignmentPlan, Capacities,
    CapacityMode,
};
pub use rule::{
    apply_priority_rule, Op, Predicate, PriorityAssignment, PriorityGroup, PriorityRule,
};
pub use tree::{search_policy_tree, PolicyTree, TreeNode, MAX_EXACT_DEPTH};
pub use value::{
    evaluate_actions, evaluate_policy_value, value_contributions, Policy, PolicyValue,
};

use crate::dr::DrScores;
use crate::matrix::Matrix;

/// Rewards for tree search from AIPW scores: zero for control, the program's
/// contrast otherwise. Columns follow the arm order.
pub fn rewards_from_scores(scores: &DrScores) -> Matrix {
    let n = scores.n_rows();
    let mut r = Matrix::zeros(n, scores.arms.len());
    for i in 0..n {
        for (c, &p) in scores.programs.iter().enumerate() {
            r.set(i, p, scores.gamma.get(i, c));
        }
    }
    r
}

/// Tie-break order for actions: control first, then programs in arm order.
pub fn action_preference(n_arms: usize, control: usize) -> Vec<usize> {
    std::iter::once(control)
        .chain((0..n_arms).filter(|&a| a != control))
        .collect()
}
