//! Permutations in rank-vector form, Kendall tau distance and discordance
//! (inversion) vectors.
//!
//! A [`Permutation`] over `m` items stores `ranks[i] = position of item i+1`,
//! with items and positions both 1-based in the public surface.
//!
//! Discordance vectors are indexed by *stage*: stage `j` is the item that the
//! reference ranking `pi0` places at position `j`. Entry `j` counts the items
//! that `pi0` ranks ahead of stage `j` but `sigma` ranks behind it, so it lies
//! in `0..=j-1`. With `pi0` the identity, stage `j` is simply item `j`.
//! The map `sigma -> discordance_vector(sigma, pi0)` is a bijection from `S_m`
//! onto `{0} x {0,1} x ... x {0..m-1}`, inverted by [`decode_inversion`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A ranking of `m ≥ 1` items in rank-vector form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation {
    ranks: Vec<usize>,
}

impl Permutation {
    /// Builds a permutation from 1-based ranks; `ranks[i]` is the position of
    /// item `i + 1`.
    pub fn from_ranks(ranks: Vec<usize>) -> Result<Self> {
        let m = ranks.len();
        if m == 0 {
            return Err(Error::domain("permutation must have at least one item"));
        }
        let mut seen = vec![false; m];
        for &r in &ranks {
            if r == 0 || r > m {
                return Err(Error::domain(format!("rank {r} outside 1..={m}")));
            }
            if std::mem::replace(&mut seen[r - 1], true) {
                return Err(Error::domain(format!("rank {r} appears more than once")));
            }
        }
        Ok(Self { ranks })
    }

    /// Builds a permutation from an ordering: `order[p]` is the item placed at
    /// position `p + 1`.
    pub fn from_ordering(order: &[usize]) -> Result<Self> {
        let ordering = Self::from_ranks(order.to_vec())?;
        Ok(ordering.inverse())
    }

    pub fn identity(m: usize) -> Self {
        assert!(m >= 1, "permutation must have at least one item");
        Self {
            ranks: (1..=m).collect(),
        }
    }

    /// The ranking that reverses the identity.
    pub fn reversal(m: usize) -> Self {
        assert!(m >= 1, "permutation must have at least one item");
        Self {
            ranks: (1..=m).rev().collect(),
        }
    }

    /// Identity with items `a` and `b` exchanged.
    pub fn transposition(m: usize, a: usize, b: usize) -> Result<Self> {
        if a == 0 || b == 0 || a > m || b > m {
            return Err(Error::domain(format!("transposition ({a} {b}) outside 1..={m}")));
        }
        let mut ranks: Vec<usize> = (1..=m).collect();
        ranks.swap(a - 1, b - 1);
        Ok(Self { ranks })
    }

    pub fn m(&self) -> usize {
        self.ranks.len()
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    /// Position of a 1-based item.
    pub fn rank(&self, item: usize) -> usize {
        self.ranks[item - 1]
    }

    /// `order[p]` is the item at position `p + 1`.
    pub fn ordering(&self) -> Vec<usize> {
        let mut order = vec![0; self.m()];
        for (i, &r) in self.ranks.iter().enumerate() {
            order[r - 1] = i + 1;
        }
        order
    }

    pub fn inverse(&self) -> Self {
        Self {
            ranks: self.ordering(),
        }
    }

    /// Renames item `i` to `relabel.rank(i)`; positions are unchanged.
    pub fn relabel_items(&self, relabel: &Permutation) -> Result<Self> {
        Error::check_dim(self.m(), relabel.m())?;
        let mut ranks = vec![0; self.m()];
        for (i, &r) in self.ranks.iter().enumerate() {
            ranks[relabel.ranks[i] - 1] = r;
        }
        Ok(Self { ranks })
    }

    pub fn is_identity(&self) -> bool {
        self.ranks.iter().enumerate().all(|(i, &r)| r == i + 1)
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;

    fn try_from(ranks: Vec<usize>) -> Result<Self> {
        Self::from_ranks(ranks)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.ranks
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, r) in self.ranks.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{r}")?;
        }
        Ok(())
    }
}

impl FromStr for Permutation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let ranks = s
            .split_whitespace()
            .map(|tok| {
                tok.parse::<usize>().map_err(|e| Error::Parse {
                    line: 1,
                    msg: format!("bad rank {tok:?}: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_ranks(ranks)
    }
}

/// Parses the line-oriented permutation text format: one ranking per line as
/// space-separated ranks; blank lines and lines starting with `#` are skipped.
/// All rankings must share the same `m`.
pub fn parse_permutations(text: &str) -> Result<Vec<Permutation>> {
    let mut out: Vec<Permutation> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let perm = line.parse::<Permutation>().map_err(|e| match e {
            Error::Parse { msg, .. } => Error::Parse { line: idx + 1, msg },
            other => Error::Parse {
                line: idx + 1,
                msg: other.to_string(),
            },
        })?;
        if let Some(first) = out.first() {
            if first.m() != perm.m() {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("expected {} ranks, found {}", first.m(), perm.m()),
                });
            }
        }
        out.push(perm);
    }
    Ok(out)
}

/// Inverse of [`parse_permutations`]; every ranking is terminated by `\n`.
pub fn format_permutations<'a, I>(perms: I) -> String
where
    I: IntoIterator<Item = &'a Permutation>,
{
    let mut s = String::new();
    for p in perms {
        s.push_str(&p.to_string());
        s.push('\n');
    }
    s
}

/// Per-stage discordance counts; `counts()[j - 1]` belongs to stage `j` and is
/// at most `j - 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DiscordanceVector {
    v: Vec<usize>,
}

impl DiscordanceVector {
    pub fn new(v: Vec<usize>) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::domain("discordance vector must be nonempty"));
        }
        for (idx, &x) in v.iter().enumerate() {
            if x > idx {
                return Err(Error::domain(format!(
                    "entry {} for stage {} exceeds {}",
                    x,
                    idx + 1,
                    idx
                )));
            }
        }
        Ok(Self { v })
    }

    pub(crate) fn new_unchecked(v: Vec<usize>) -> Self {
        debug_assert!(v.iter().enumerate().all(|(i, &x)| x <= i));
        Self { v }
    }

    pub fn m(&self) -> usize {
        self.v.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.v
    }

    pub fn total(&self) -> u64 {
        self.v.iter().map(|&x| x as u64).sum()
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.v
    }
}

/// Fenwick tree over `0..n` counting occupied slots.
struct Fenwick {
    tree: Vec<i64>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Self {
            tree: vec![0; n + 1],
        }
    }

    fn full(n: usize) -> Self {
        // O(n) build with every slot set to 1
        let mut tree = vec![0i64; n + 1];
        for i in 1..=n {
            tree[i] += 1;
            let parent = i + (i & i.wrapping_neg());
            if parent <= n {
                tree[parent] += tree[i];
            }
        }
        Self { tree }
    }

    fn add(&mut self, idx: usize, delta: i64) {
        let mut i = idx + 1;
        while i < self.tree.len() {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum over slots `0..idx`.
    fn prefix(&self, idx: usize) -> i64 {
        let mut i = idx;
        let mut s = 0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }

    /// Smallest slot whose prefix sum (inclusive) reaches `k + 1`, i.e. the
    /// `k`-th (0-based) occupied slot.
    fn kth(&self, mut k: i64) -> usize {
        let n = self.tree.len() - 1;
        let mut pos = 0;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= k {
                pos = next;
                k -= self.tree[next];
            }
            step >>= 1;
        }
        pos
    }
}

/// `sigma`'s positions listed in `pi0`'s order: entry `j - 1` is the position
/// `sigma` gives to stage `j`.
fn positions_in_reference_order(sigma: &Permutation, pi0: &Permutation) -> Vec<usize> {
    pi0.ordering().into_iter().map(|item| sigma.rank(item)).collect()
}

/// Counts inversions by merge sort; `buf` is scratch of the same length.
fn merge_count(a: &mut [usize], buf: &mut [usize]) -> u64 {
    let n = a.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = {
        let (left, right) = a.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(left, bl) + merge_count(right, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if a[i] <= a[j] {
            buf[k] = a[i];
            i += 1;
        } else {
            buf[k] = a[j];
            inv += (mid - i) as u64;
            j += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&a[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&a[j..n]);
    a.copy_from_slice(&buf[..n]);
    inv
}

/// Kendall tau distance: the number of item pairs the two rankings order
/// oppositely. `O(m log m)`.
pub fn kendall_tau(a: &Permutation, b: &Permutation) -> Result<u64> {
    Error::check_dim(a.m(), b.m())?;
    let mut seq = positions_in_reference_order(b, a);
    let mut buf = vec![0; seq.len()];
    Ok(merge_count(&mut seq, &mut buf))
}

/// Quadratic pair-by-pair Kendall tau, kept as a reference for testing.
pub fn kendall_tau_reference(a: &Permutation, b: &Permutation) -> Result<u64> {
    Error::check_dim(a.m(), b.m())?;
    let (ra, rb) = (a.ranks(), b.ranks());
    let m = ra.len();
    let mut count = 0;
    for i in 0..m {
        for j in i + 1..m {
            let da = ra[i] as i64 - ra[j] as i64;
            let db = rb[i] as i64 - rb[j] as i64;
            if da * db < 0 {
                count += 1;
            }
        }
    }
    Ok(count)
}

/// Per-stage discordance counts of `sigma` relative to `pi0`. `O(m log m)`.
pub fn discordance_vector(sigma: &Permutation, pi0: &Permutation) -> Result<DiscordanceVector> {
    Error::check_dim(pi0.m(), sigma.m())?;
    let seq = positions_in_reference_order(sigma, pi0);
    let m = seq.len();
    let mut fw = Fenwick::new(m);
    let mut v = Vec::with_capacity(m);
    for (j, &pos) in seq.iter().enumerate() {
        // earlier stages placed after this one
        let before = fw.prefix(pos - 1) as usize;
        v.push(j - before);
        fw.add(pos - 1, 1);
    }
    Ok(DiscordanceVector::new_unchecked(v))
}

/// Inverse of [`discordance_vector`] for a fixed `pi0`. `O(m log m)`.
///
/// Stages are placed from `m` down to `1`; once all later stages are placed the
/// free slots are exactly the final positions of stages `1..=j`, and stage `j`
/// sits at relative position `j - 1 - v[j]` among them.
pub fn decode_inversion(v: &DiscordanceVector, pi0: &Permutation) -> Result<Permutation> {
    Error::check_dim(pi0.m(), v.m())?;
    let m = v.m();
    let counts = v.counts();
    let mut free = Fenwick::full(m);
    let mut stage_pos = vec![0usize; m];
    for j in (0..m).rev() {
        if counts[j] > j {
            return Err(Error::domain(format!(
                "entry {} for stage {} exceeds {}",
                counts[j],
                j + 1,
                j
            )));
        }
        let slot = free.kth((j - counts[j]) as i64);
        free.add(slot, -1);
        stage_pos[j] = slot + 1;
    }
    let order = pi0.ordering();
    let mut ranks = vec![0; m];
    for (stage, &item) in order.iter().enumerate() {
        ranks[item - 1] = stage_pos[stage];
    }
    Ok(Permutation { ranks })
}

/// Iterator over all of `S_m` in lexicographic order of the rank vector.
pub struct AllPermutations {
    next: Option<Vec<usize>>,
}

impl Iterator for AllPermutations {
    type Item = Permutation;

    fn next(&mut self) -> Option<Permutation> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        if next_lexicographic(&mut succ) {
            self.next = Some(succ);
        }
        Some(Permutation { ranks: current })
    }
}

fn next_lexicographic(a: &mut [usize]) -> bool {
    let n = a.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && a[i - 1] >= a[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while a[j] <= a[i - 1] {
        j -= 1;
    }
    a.swap(i - 1, j);
    a[i..].reverse();
    true
}

/// All `m!` permutations of `m ≥ 1` items.
pub fn all_permutations(m: usize) -> AllPermutations {
    assert!(m >= 1, "permutation must have at least one item");
    AllPermutations {
        next: Some((1..=m).collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(r: &[usize]) -> Permutation {
        Permutation::from_ranks(r.to_vec()).unwrap()
    }

    // Literal pair enumeration over stages, independent of the Fenwick path.
    fn discordance_naive(sigma: &Permutation, pi0: &Permutation) -> Vec<usize> {
        let order = pi0.ordering();
        let m = order.len();
        (0..m)
            .map(|j| {
                (0..j)
                    .filter(|&i| {
                        let ds = sigma.rank(order[i]) as i64 - sigma.rank(order[j]) as i64;
                        let dp = i as i64 - j as i64;
                        ds * dp < 0
                    })
                    .count()
            })
            .collect()
    }

    #[test]
    fn rejects_invalid_ranks() {
        assert!(Permutation::from_ranks(vec![]).is_err());
        assert!(Permutation::from_ranks(vec![1, 1]).is_err());
        assert!(Permutation::from_ranks(vec![0, 1]).is_err());
        assert!(Permutation::from_ranks(vec![1, 3]).is_err());
    }

    #[test]
    fn ordering_round_trip() {
        let x = p(&[3, 1, 2]);
        assert_eq!(x.ordering(), vec![2, 3, 1]);
        assert_eq!(Permutation::from_ordering(&x.ordering()).unwrap(), x);
    }

    #[test]
    fn kendall_tau_examples() {
        let id = Permutation::identity(4);
        assert_eq!(kendall_tau(&id, &id).unwrap(), 0);
        assert_eq!(kendall_tau(&id, &Permutation::reversal(4)).unwrap(), 6);
        assert_eq!(
            kendall_tau(&Permutation::identity(3), &p(&[2, 1, 3])).unwrap(),
            1
        );
        assert!(matches!(
            kendall_tau(&id, &Permutation::identity(3)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn discordance_examples() {
        let id4 = Permutation::identity(4);
        assert_eq!(discordance_vector(&id4, &id4).unwrap().counts(), &[0, 0, 0, 0]);
        assert_eq!(
            discordance_vector(&Permutation::reversal(4), &id4).unwrap().counts(),
            &[0, 1, 2, 3]
        );
        assert_eq!(
            discordance_vector(&p(&[2, 1, 3]), &Permutation::identity(3))
                .unwrap()
                .counts(),
            &[0, 1, 0]
        );
        // reversal of an arbitrary pi0
        let pi0 = p(&[2, 4, 1, 3]);
        let rev: Vec<usize> = pi0.ranks().iter().map(|r| 5 - r).collect();
        assert_eq!(
            discordance_vector(&p(&rev), &pi0).unwrap().counts(),
            &[0, 1, 2, 3]
        );
    }

    #[test]
    fn decode_examples() {
        let id4 = Permutation::identity(4);
        let zero = DiscordanceVector::new(vec![0; 4]).unwrap();
        assert_eq!(decode_inversion(&zero, &id4).unwrap(), id4);
        let full = DiscordanceVector::new(vec![0, 1, 2, 3]).unwrap();
        assert_eq!(decode_inversion(&full, &id4).unwrap(), Permutation::reversal(4));
        let pi0 = p(&[3, 1, 4, 2]);
        assert_eq!(decode_inversion(&zero, &pi0).unwrap(), pi0);
    }

    #[test]
    fn discordance_vector_range_enforced() {
        assert!(DiscordanceVector::new(vec![1, 0]).is_err());
        assert!(DiscordanceVector::new(vec![0, 2]).is_err());
        assert!(DiscordanceVector::new(vec![0, 1, 2]).is_ok());
    }

    #[test]
    fn exhaustive_round_trip_small_m() {
        for m in 1..=6 {
            let centers: Vec<Permutation> = all_permutations(m).step_by(7).collect();
            for pi0 in &centers {
                let mut seen = std::collections::HashSet::new();
                for sigma in all_permutations(m) {
                    let v = discordance_vector(&sigma, pi0).unwrap();
                    assert_eq!(v.counts(), discordance_naive(&sigma, pi0).as_slice());
                    assert_eq!(v.total(), kendall_tau(&sigma, pi0).unwrap());
                    assert_eq!(decode_inversion(&v, pi0).unwrap(), sigma);
                    assert!(seen.insert(v));
                }
                let fact: usize = (1..=m).product();
                assert_eq!(seen.len(), fact);
            }
        }
    }

    #[test]
    fn all_permutations_counts() {
        assert_eq!(all_permutations(1).count(), 1);
        assert_eq!(all_permutations(5).count(), 120);
    }

    #[test]
    fn text_format_round_trip_and_errors() {
        let text = "# header\n1 2 3\n\n3 1 2\n";
        let perms = parse_permutations(text).unwrap();
        assert_eq!(perms.len(), 2);
        assert_eq!(format_permutations(&perms), "1 2 3\n3 1 2\n");
        assert!(matches!(
            parse_permutations("1 2 3\n1 2\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_permutations("1 x 3\n"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn relabel_is_consistent_with_kendall_tau() {
        let a = p(&[2, 3, 1, 4]);
        let b = p(&[4, 1, 3, 2]);
        let rho = p(&[3, 1, 4, 2]);
        let (ra, rb) = (a.relabel_items(&rho).unwrap(), b.relabel_items(&rho).unwrap());
        assert_eq!(kendall_tau(&a, &b).unwrap(), kendall_tau(&ra, &rb).unwrap());
        assert_eq!(
            discordance_vector(&a, &b).unwrap(),
            discordance_vector(&ra, &rb).unwrap()
        );
    }

    fn arb_perm(m: usize) -> impl Strategy<Value = Permutation> {
        Just((1..=m).collect::<Vec<_>>())
            .prop_shuffle()
            .prop_map(|r| Permutation::from_ranks(r).unwrap())
    }

    fn arb_triple() -> impl Strategy<Value = (Permutation, Permutation, Permutation)> {
        (1usize..60).prop_flat_map(|m| (arb_perm(m), arb_perm(m), arb_perm(m)))
    }

    proptest! {
        #[test]
        fn kendall_tau_metric_properties((a, b, c) in arb_triple()) {
            let ab = kendall_tau(&a, &b).unwrap();
            prop_assert_eq!(ab, kendall_tau_reference(&a, &b).unwrap());
            prop_assert_eq!(ab, kendall_tau(&b, &a).unwrap());
            let m = a.m() as u64;
            prop_assert!(ab <= m * (m - 1) / 2);
            let bc = kendall_tau(&b, &c).unwrap();
            let ac = kendall_tau(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc);
        }

        #[test]
        fn decode_inverts_encode_large_m((sigma, pi0, _) in arb_triple()) {
            let v = discordance_vector(&sigma, &pi0).unwrap();
            prop_assert!(v.counts().iter().enumerate().all(|(j, &x)| x <= j));
            let naive = discordance_naive(&sigma, &pi0);
            prop_assert_eq!(v.counts(), naive.as_slice());
            prop_assert_eq!(decode_inversion(&v, &pi0).unwrap(), sigma);
        }
    }
}
