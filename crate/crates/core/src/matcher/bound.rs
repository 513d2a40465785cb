use super::{MatchingProblem, Method};

/// Maximum bipartite matching by augmenting paths. `adj[l]` lists right
/// vertices in preference order; returns the right vertex of each left one.
pub(crate) fn max_matching(adj: &[Vec<usize>], n_right: usize) -> Vec<Option<usize>> {
    let mut left_of: Vec<Option<usize>> = vec![None; n_right];
    let mut right_of: Vec<Option<usize>> = vec![None; adj.len()];
    let mut seen = vec![usize::MAX; n_right];
    for l in 0..adj.len() {
        augment(l, l, adj, &mut left_of, &mut right_of, &mut seen);
    }
    right_of
}

fn augment(
    l: usize,
    stamp: usize,
    adj: &[Vec<usize>],
    left_of: &mut [Option<usize>],
    right_of: &mut [Option<usize>],
    seen: &mut [usize],
) -> bool {
    for &r in &adj[l] {
        if seen[r] == stamp {
            continue;
        }
        seen[r] = stamp;
        let free = match left_of[r] {
            None => true,
            Some(other) => augment(other, stamp, adj, left_of, right_of, seen),
        };
        if free {
            left_of[r] = Some(l);
            right_of[l] = Some(r);
            return true;
        }
    }
    false
}

fn matching_size(adj: &[Vec<usize>], n_right: usize) -> usize {
    max_matching(adj, n_right).iter().filter(|m| m.is_some()).count()
}

/// Upper bound on the cardinality of any feasible match set, from the
/// one-to-one and ordering structure alone.
pub(crate) fn upper_bound(problem: &MatchingProblem) -> usize {
    let n_e = problem.exposed.len();
    let n_u = problem.unexposed.len();
    let mut any = vec![Vec::new(); n_e];
    let mut left = vec![Vec::new(); n_e];
    let mut right = vec![Vec::new(); n_e];
    for c in &problem.candidates {
        any[c.exposed].extend_from_slice(c.units());
        if c.arity == 2 {
            left[c.exposed].push(c.unexposed[0]);
            right[c.exposed].push(c.unexposed[1]);
        }
    }
    for list in any.iter_mut().chain(left.iter_mut()).chain(right.iter_mut()) {
        list.sort_unstable();
        list.dedup();
    }
    match problem.method {
        Method::OneToOne | Method::OneToOneOrTwo => matching_size(&any, n_u),
        Method::OneToTwo => matching_size(&left, n_u).min(matching_size(&right, n_u)).min(n_u / 2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn augmenting_paths_find_perfect_matching() {
        let adj = vec![vec![0, 1], vec![0], vec![1, 2]];
        let m = max_matching(&adj, 3);
        assert_eq!(m, vec![Some(1), Some(0), Some(2)]);
    }

    #[test]
    fn matching_size_respects_bottleneck() {
        let adj = vec![vec![0], vec![0], vec![0, 1]];
        assert_eq!(matching_size(&adj, 2), 2);
    }
}
