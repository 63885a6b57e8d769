/// Bounded best-k collector under the order "smaller key first, then
/// smaller index". The order is total, so the retained set does not depend
/// on the order in which candidates are offered.
#[derive(Debug, Clone)]
pub(crate) struct TopK {
    k: usize,
    items: Vec<(f64, usize)>,
}

#[inline]
fn before(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

impl TopK {
    pub(crate) fn new(k: usize) -> Self {
        TopK {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    #[inline]
    pub(crate) fn offer(&mut self, key: f64, idx: usize) {
        let cand = (key, idx);
        if self.items.len() == self.k {
            match self.items.last() {
                Some(&worst) if before(cand, worst) => {
                    self.items.pop();
                }
                _ => return,
            }
        }
        let pos = self.items.partition_point(|&e| before(e, cand));
        self.items.insert(pos, cand);
    }

    pub(crate) fn merge(&mut self, other: &TopK) {
        for &(key, idx) in &other.items {
            self.offer(key, idx);
        }
    }

    pub(crate) fn into_sorted(self) -> Vec<(f64, usize)> {
        self.items
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_best_in_order() {
        let mut t = TopK::new(3);
        for (i, key) in [5.0, 1.0, 3.0, 1.0, 4.0, 0.5].into_iter().enumerate() {
            t.offer(key, i);
        }
        assert_eq!(t.into_sorted(), vec![(0.5, 5), (1.0, 1), (1.0, 3)]);
    }

    #[test]
    fn merge_is_order_independent() {
        let keys = [2.0, 2.0, 1.0, 7.0, 2.0, 0.0, 3.0];
        let mut a = TopK::new(4);
        let mut b = TopK::new(4);
        for (i, &k) in keys.iter().enumerate() {
            if i % 2 == 0 {
                a.offer(k, i)
            } else {
                b.offer(k, i)
            }
        }
        let mut ab = a.clone();
        ab.merge(&b);
        let mut ba = b.clone();
        ba.merge(&a);
        assert_eq!(ab.into_sorted(), ba.into_sorted());
    }
}
