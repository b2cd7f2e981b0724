//! Dense factor tables over small attribute subsets.
//!
//! Layout is row-major over `vars` (ascending attribute indices), last
//! variable fastest. Every operation walks values linearly with an odometer
//! over the digit vector, so nothing here allocates per cell.

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub vars: Vec<usize>,
    pub cards: Vec<usize>,
    pub values: Vec<f64>,
}

impl Table {
    pub fn zeros(vars: Vec<usize>, cards: Vec<usize>) -> Table {
        debug_assert!(vars.windows(2).all(|w| w[0] < w[1]), "vars sorted and unique");
        debug_assert_eq!(vars.len(), cards.len());
        let cells = cards.iter().product();
        Table { vars, cards, values: vec![0.0; cells] }
    }

    pub fn cells(&self) -> usize {
        self.values.len()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Positions of `sub` inside `self.vars`; panics if not a subset.
    fn positions(&self, sub: &[usize]) -> Vec<usize> {
        sub.iter()
            .map(|v| self.vars.binary_search(v).expect("subset of table vars"))
            .collect()
    }

    /// Linear index of a full assignment (digit per var, table order).
    pub fn index_of(&self, digits: &[usize]) -> usize {
        debug_assert_eq!(digits.len(), self.vars.len());
        let mut idx = 0;
        for (d, c) in digits.iter().zip(&self.cards) {
            debug_assert!(d < c);
            idx = idx * c + d;
        }
        idx
    }

    pub(crate) fn advance(digits: &mut [usize], cards: &[usize]) {
        for k in (0..digits.len()).rev() {
            digits[k] += 1;
            if digits[k] < cards[k] {
                return;
            }
            digits[k] = 0;
        }
    }

    /// Sums out everything except `keep` (sorted subset of vars).
    pub fn marginalize(&self, keep: &[usize]) -> Table {
        let pos = self.positions(keep);
        let out_cards: Vec<usize> = pos.iter().map(|p| self.cards[*p]).collect();
        let mut out = Table::zeros(keep.to_vec(), out_cards);
        let mut digits = vec![0usize; self.vars.len()];
        for v in &self.values {
            let mut oi = 0;
            for (k, p) in pos.iter().enumerate() {
                oi = oi * out.cards[k] + digits[*p];
            }
            out.values[oi] += v;
            Self::advance(&mut digits, &self.cards);
        }
        out
    }

    /// Pointwise multiply by a factor over a subset of this table's vars.
    pub fn multiply_in(&mut self, other: &Table) {
        let pos = self.positions(&other.vars);
        let mut digits = vec![0usize; self.vars.len()];
        for v in &mut self.values {
            let mut oi = 0;
            for (k, p) in pos.iter().enumerate() {
                oi = oi * other.cards[k] + digits[*p];
            }
            *v *= other.values[oi];
            Self::advance(&mut digits, &self.cards);
        }
    }

    /// Pointwise divide by a factor over a subset of vars; 0/0 is 0 (a zero
    /// separator cell implies zero mass in every cell above it).
    pub fn divide_in(&mut self, other: &Table) {
        let pos = self.positions(&other.vars);
        let mut digits = vec![0usize; self.vars.len()];
        for v in &mut self.values {
            let mut oi = 0;
            for (k, p) in pos.iter().enumerate() {
                oi = oi * other.cards[k] + digits[*p];
            }
            let d = other.values[oi];
            if d > 0.0 {
                *v /= d;
            } else {
                debug_assert_eq!(*v, 0.0, "mass above an empty separator cell");
                *v = 0.0;
            }
            Self::advance(&mut digits, &self.cards);
        }
    }

    /// Zeroes every cell whose digit for `var` differs from `state`.
    pub fn restrict(&mut self, var: usize, state: usize) {
        let p = self.positions(&[var])[0];
        let mut digits = vec![0usize; self.vars.len()];
        for v in &mut self.values {
            if digits[p] != state {
                *v = 0.0;
            }
            Self::advance(&mut digits, &self.cards);
        }
    }

    pub fn normalize(&mut self) -> f64 {
        let z = self.sum();
        if z > 0.0 {
            for v in &mut self.values {
                *v /= z;
            }
        }
        z
    }

    /// Count table over `vars` from pre-mapped state rows.
    pub fn from_counts<'a>(
        vars: Vec<usize>,
        all_cards: &[usize],
        rows: impl Iterator<Item = &'a [usize]>,
    ) -> Table {
        let cards: Vec<usize> = vars.iter().map(|v| all_cards[*v]).collect();
        let mut t = Table::zeros(vars, cards);
        for row in rows {
            let mut idx = 0;
            for (v, c) in t.vars.iter().zip(&t.cards) {
                debug_assert!(row[*v] < *c);
                idx = idx * c + row[*v];
            }
            t.values[idx] += 1.0;
        }
        t
    }
}
