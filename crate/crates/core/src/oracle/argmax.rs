use super::{decode, product};

/// Per-agent greedy actions, lowest index on ties.
pub fn decentralized_argmax(q_tables: &[Vec<f64>]) -> Vec<usize> {
    q_tables
        .iter()
        .map(|q| {
            let mut best = 0;
            for (a, v) in q.iter().enumerate() {
                if *v > q[best] {
                    best = a;
                }
            }
            best
        })
        .collect()
}

/// Exhaustive maximization of `mixer` over every joint action.
///
/// `q_tables[i]` holds agent `i`'s action values; `mixer` receives one
/// chosen value per agent. Returns the first maximizing joint action in
/// lexicographic order together with its mixed value.
pub fn brute_force_joint_argmax<F>(q_tables: &[Vec<f64>], mixer: F) -> (Vec<usize>, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let sizes: Vec<usize> = q_tables.iter().map(Vec::len).collect();
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut chosen = vec![0.0; q_tables.len()];
    for index in 0..product(&sizes) {
        let joint = decode(index, &sizes);
        for (i, a) in joint.iter().enumerate() {
            chosen[i] = q_tables[i][*a];
        }
        let v = mixer(&chosen);
        if best.as_ref().is_none_or(|(_, b)| v > *b) {
            best = Some((joint, v));
        }
    }
    best.unwrap_or_else(|| (Vec::new(), mixer(&[])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_agent_is_trivial() {
        let q = vec![vec![0.3, 1.5, -2.0, 1.5]];
        let (joint, v) = brute_force_joint_argmax(&q, |x| 2.0 * x[0] + 1.0);
        assert_eq!(joint, decentralized_argmax(&q));
        assert_eq!(v, 4.0);
    }

    #[test]
    fn non_monotone_mixer_breaks_decomposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut found = false;
        for _ in 0..200 {
            let q: Vec<Vec<f64>> = (0..2)
                .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let w: [f64; 2] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let mix = |x: &[f64]| w[0] * x[0] + w[1] * x[1];
            let (_, best) = brute_force_joint_argmax(&q, mix);
            let greedy = decentralized_argmax(&q);
            let composed = mix(&[q[0][greedy[0]], q[1][greedy[1]]]);
            if best - composed > 1e-9 {
                found = true;
                break;
            }
        }
        assert!(found);
    }
}
