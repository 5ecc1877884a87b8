/// Bounded candidate list kept sorted by `(squared distance, index)`.
#[derive(Debug, Clone)]
pub(crate) struct TopK {
    k: usize,
    items: Vec<(f64, usize)>,
}

impl TopK {
    pub(crate) fn new(k: usize) -> Self {
        Self {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    #[inline]
    pub(crate) fn is_full(&self) -> bool {
        self.items.len() == self.k
    }

    /// Largest squared distance that can still enter the list.
    #[inline]
    pub(crate) fn bound(&self) -> f64 {
        if self.is_full() {
            self.items[self.k - 1].0
        } else {
            f64::INFINITY
        }
    }

    #[inline]
    pub(crate) fn push(&mut self, d: f64, idx: usize) {
        if self.is_full() {
            let (wd, wi) = self.items[self.k - 1];
            if (d, idx) >= (wd, wi) {
                return;
            }
        }
        let pos = self
            .items
            .partition_point(|&(od, oi)| (od, oi) < (d, idx));
        self.items.insert(pos, (d, idx));
        self.items.truncate(self.k);
    }

    pub(crate) fn into_sorted(self) -> Vec<(f64, usize)> {
        self.items
    }
}
