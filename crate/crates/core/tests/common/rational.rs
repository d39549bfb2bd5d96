//! Exact rational confusion-matrix oracle for the metrics.

pub fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 { a } else { gcd(b, a % b) }
}

#[derive(Clone, Copy, Debug)]
pub struct Frac(pub u128, pub u128);

impl Frac {
    pub fn new(n: u128, d: u128) -> Self {
        let g = gcd(n, d).max(1);
        Frac(n / g, d / g)
    }
    pub fn add(self, o: Frac) -> Frac {
        Frac::new(self.0 * o.1 + o.0 * self.1, self.1 * o.1)
    }
    pub fn mul(self, o: Frac) -> Frac {
        Frac::new(self.0 * o.0, self.1 * o.1)
    }
    pub fn div(self, o: Frac) -> Frac {
        Frac::new(self.0 * o.1, self.1 * o.0)
    }
    pub fn value(self) -> f64 {
        self.0 as f64 / self.1 as f64
    }
}

/// Full class × class confusion matrix, `m[gold][pred]`.
pub fn confusion(pred: &[usize], gold: &[usize], classes: usize) -> Vec<Vec<u128>> {
    let mut m = vec![vec![0u128; classes]; classes];
    for (&p, &g) in pred.iter().zip(gold) {
        m[g][p] += 1;
    }
    m
}

/// Per-class F1 from precision and recall, 0 when there are no hits.
pub fn class_f1(m: &[Vec<u128>], c: usize) -> Frac {
    let tp = m[c][c];
    if tp == 0 {
        return Frac(0, 1);
    }
    let predicted: u128 = m.iter().map(|row| row[c]).sum();
    let actual: u128 = m[c].iter().sum();
    let precision = Frac::new(tp, predicted);
    let recall = Frac::new(tp, actual);
    Frac(2, 1).mul(precision).mul(recall).div(precision.add(recall))
}

pub fn oracle_accuracy(m: &[Vec<u128>]) -> f64 {
    let total: u128 = m.iter().flatten().sum();
    let diag: u128 = (0..m.len()).map(|c| m[c][c]).sum();
    Frac::new(diag, total).value()
}

pub fn oracle_weighted(m: &[Vec<u128>]) -> f64 {
    let total: u128 = m.iter().flatten().sum();
    let mut acc = Frac(0, 1);
    for c in 0..m.len() {
        let support: u128 = m[c].iter().sum();
        acc = acc.add(Frac(support, 1).mul(class_f1(m, c)));
    }
    acc.div(Frac(total, 1)).value()
}
