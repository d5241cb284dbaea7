//! Soft-Jaccard loss, thresholding, and Jaccard/Dice evaluation.
//!
//! The loss for one image with confidences `p` and binary truth `t` is
//!
//! ```text
//! L = 1 - sum(t*p) / (sum(t^2) + sum(p^2) - sum(t*p))
//! ```
//!
//! summed over every pixel of the image. A batch loss is the mean over images.
//! When both `t` and `p` are all zero the denominator vanishes and the loss is
//! defined as 0.

use std::fmt::Write as _;
use std::io::Write;
use std::ops::{Add, AddAssign};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Binary decision threshold on confidences; `p >= 0.5` is skin.
pub const THRESHOLD: f64 = 0.5;

fn check_pair(p: &Tensor, t: &Tensor) -> Result<()> {
    if p.shape() != t.shape() {
        return Err(Error::shape(
            "jaccard_loss",
            format!("prediction {:?} vs truth {:?}", p.shape(), t.shape()),
        ));
    }
    if let Some(v) = t.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::Contract(format!("truth must be binary, found {v}")));
    }
    if let Some(v) = p.data().iter().find(|&&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::Contract(format!("confidence must lie in [0, 1], found {v}")));
    }
    Ok(())
}

/// `(intersection, union)` of the soft sets.
fn soft_sets(p: &[f64], t: &[f64]) -> (f64, f64) {
    let mut inter = 0.0;
    let mut tt = 0.0;
    let mut pp = 0.0;
    for (&pk, &tk) in p.iter().zip(t) {
        inter += tk * pk;
        tt += tk * tk;
        pp += pk * pk;
    }
    (inter, tt + pp - inter)
}

fn image_loss(p: &[f64], t: &[f64]) -> f64 {
    let (inter, union) = soft_sets(p, t);
    if union == 0.0 {
        0.0
    } else {
        1.0 - inter / union
    }
}

fn image_loss_grad(p: &[f64], t: &[f64], scale: f64, out: &mut [f64]) {
    let (inter, union) = soft_sets(p, t);
    if union == 0.0 {
        out.fill(0.0);
        return;
    }
    let u2 = union * union;
    for ((o, &pk), &tk) in out.iter_mut().zip(p).zip(t) {
        *o = -scale * (tk * union - inter * (2.0 * pk - tk)) / u2;
    }
}

/// Soft-Jaccard loss of a single image (any shape).
pub fn jaccard_loss(p: &Tensor, t: &Tensor) -> Result<f64> {
    check_pair(p, t)?;
    Ok(image_loss(p.data(), t.data()))
}

/// dL/dp of [`jaccard_loss`].
pub fn jaccard_loss_grad(p: &Tensor, t: &Tensor) -> Result<Tensor> {
    check_pair(p, t)?;
    let mut g = p.zeros_like();
    image_loss_grad(p.data(), t.data(), 1.0, g.data_mut());
    Ok(g)
}

fn per_image(p: &Tensor) -> (usize, usize) {
    let n = p.shape()[0];
    (n, p.len() / n)
}

/// Mean per-image loss over a batch; the leading axis indexes images.
pub fn batch_jaccard_loss(p: &Tensor, t: &Tensor) -> Result<f64> {
    check_pair(p, t)?;
    let (n, stride) = per_image(p);
    let total: f64 = p
        .data()
        .chunks(stride)
        .zip(t.data().chunks(stride))
        .map(|(pi, ti)| image_loss(pi, ti))
        .sum();
    Ok(total / n as f64)
}

/// Per-image losses of a batch.
pub fn per_image_losses(p: &Tensor, t: &Tensor) -> Result<Vec<f64>> {
    check_pair(p, t)?;
    let (_, stride) = per_image(p);
    Ok(p.data()
        .chunks(stride)
        .zip(t.data().chunks(stride))
        .map(|(pi, ti)| image_loss(pi, ti))
        .collect())
}

/// Gradient of [`batch_jaccard_loss`].
pub fn batch_jaccard_loss_grad(p: &Tensor, t: &Tensor) -> Result<Tensor> {
    check_pair(p, t)?;
    let (n, stride) = per_image(p);
    let mut g = p.zeros_like();
    for ((gi, pi), ti) in g
        .data_mut()
        .chunks_mut(stride)
        .zip(p.data().chunks(stride))
        .zip(t.data().chunks(stride))
    {
        image_loss_grad(pi, ti, 1.0 / n as f64, gi);
    }
    Ok(g)
}

/// 1 where `p >= threshold`, else 0.
pub fn binarize(p: &Tensor, threshold: f64) -> Tensor {
    p.map(|v| if v >= threshold { 1.0 } else { 0.0 })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl Add for ConfusionCounts {
    type Output = ConfusionCounts;

    fn add(self, o: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: ConfusionCounts) {
        *self = *self + o;
    }
}

/// Pixel confusion counts of a binary prediction against a binary truth.
pub fn confusion(pred: &Tensor, truth: &Tensor) -> Result<ConfusionCounts> {
    if pred.shape() != truth.shape() {
        return Err(Error::shape(
            "confusion",
            format!("prediction {:?} vs truth {:?}", pred.shape(), truth.shape()),
        ));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        match (p != 0.0, t != 0.0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// `tp / (tp + fp + fn)`, or 1.0 when both masks are empty.
pub fn jaccard_index(c: &ConfusionCounts) -> f64 {
    let denom = c.tp + c.fp + c.fn_;
    if denom == 0 {
        1.0
    } else {
        c.tp as f64 / denom as f64
    }
}

/// `2tp / (2tp + fp + fn)`, or 1.0 when both masks are empty.
pub fn dice(c: &ConfusionCounts) -> f64 {
    let denom = 2 * c.tp + c.fp + c.fn_;
    if denom == 0 {
        1.0
    } else {
        (2 * c.tp) as f64 / denom as f64
    }
}

/// Dice implied by a Jaccard value through `D = 2J / (1 + J)`.
pub fn dice_from_jaccard(j: f64) -> f64 {
    2.0 * j / (1.0 + j)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageScore {
    pub id: String,
    pub jaccard: f64,
    pub dice: f64,
    pub counts: ConfusionCounts,
}

/// Per-image scores plus two summaries: the mean over images, and the
/// aggregate computed from pixel counts summed over all images. The aggregate
/// is the headline number.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub per_image: Vec<ImageScore>,
    pub mean_jaccard: f64,
    pub mean_dice: f64,
    pub agg_jaccard: f64,
    pub agg_dice: f64,
    pub totals: ConfusionCounts,
}

/// Scores confidence maps against truth masks, naming rows `0, 1, ...`.
pub fn evaluate(predictions: &[Tensor], truths: &[Tensor]) -> Result<EvalReport> {
    let ids: Vec<String> = (0..predictions.len()).map(|i| i.to_string()).collect();
    evaluate_named(&ids, predictions, truths)
}

pub fn evaluate_named(ids: &[String], predictions: &[Tensor], truths: &[Tensor]) -> Result<EvalReport> {
    if predictions.len() != truths.len() || ids.len() != predictions.len() {
        return Err(Error::shape(
            "evaluate",
            format!(
                "{} ids, {} predictions, {} truths",
                ids.len(),
                predictions.len(),
                truths.len()
            ),
        ));
    }
    if predictions.is_empty() {
        return Err(Error::Arity { op: "evaluate" });
    }
    let mut per_image = Vec::with_capacity(predictions.len());
    let mut totals = ConfusionCounts::default();
    for ((id, p), t) in ids.iter().zip(predictions).zip(truths) {
        let counts = confusion(&binarize(p, THRESHOLD), t)?;
        totals += counts;
        per_image.push(ImageScore {
            id: id.clone(),
            jaccard: jaccard_index(&counts),
            dice: dice(&counts),
            counts,
        });
    }
    let n = per_image.len() as f64;
    Ok(EvalReport {
        mean_jaccard: per_image.iter().map(|s| s.jaccard).sum::<f64>() / n,
        mean_dice: per_image.iter().map(|s| s.dice).sum::<f64>() / n,
        agg_jaccard: jaccard_index(&totals),
        agg_dice: dice(&totals),
        totals,
        per_image,
    })
}

impl EvalReport {
    /// Tab-separated report: header, one row per image, then `MEAN` and
    /// `AGGREGATE` rows. Scores carry 6 decimals.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("id\tjaccard\tdice\n");
        for row in &self.per_image {
            let _ = writeln!(s, "{}\t{:.6}\t{:.6}", row.id, row.jaccard, row.dice);
        }
        let _ = writeln!(s, "MEAN\t{:.6}\t{:.6}", self.mean_jaccard, self.mean_dice);
        let _ = writeln!(s, "AGGREGATE\t{:.6}\t{:.6}", self.agg_jaccard, self.agg_dice);
        s
    }

    pub fn write_tsv(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(self.to_tsv().as_bytes())
    }

    /// Aggregate scores as `J (D)` with two decimals.
    pub fn summary(&self) -> String {
        format_scores(self.agg_jaccard, self.agg_dice)
    }
}

pub fn format_scores(jaccard: f64, dice: f64) -> String {
    format!("{jaccard:.2} ({dice:.2})")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> Tensor {
        Tensor::from_vec(&[x.len()], x.to_vec()).unwrap()
    }

    #[test]
    fn loss_fixtures() {
        let t = v(&[1.0, 0.0, 1.0]);
        assert_eq!(jaccard_loss(&t, &t).unwrap(), 0.0);
        let z = v(&[0.0, 0.0]);
        assert_eq!(jaccard_loss(&z, &z).unwrap(), 0.0);
        assert_eq!(jaccard_loss(&v(&[0.5, 0.5]), &v(&[1.0, 0.0])).unwrap(), 0.5);
    }

    #[test]
    fn grad_fixture() {
        let g = jaccard_loss_grad(&v(&[0.5, 0.5]), &v(&[1.0, 0.0])).unwrap();
        assert_eq!(g.data(), &[-1.0, 0.5]);
        let z = v(&[0.0, 0.0]);
        assert_eq!(jaccard_loss_grad(&z, &z).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn grad_non_positive_on_skin_at_perfect_prediction() {
        let t = v(&[1.0, 0.0, 1.0, 1.0, 0.0]);
        let g = jaccard_loss_grad(&t, &t).unwrap();
        for (gk, tk) in g.data().iter().zip(t.data()) {
            if *tk == 1.0 {
                assert!(*gk <= 0.0);
            }
        }
    }

    #[test]
    fn loss_contracts() {
        assert!(matches!(
            jaccard_loss(&v(&[0.5]), &v(&[0.5])),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            jaccard_loss(&v(&[0.5, 0.1]), &v(&[1.0])),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(
            jaccard_loss(&v(&[1.5]), &v(&[1.0])),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn batch_loss_is_mean_of_images() {
        let p = Tensor::from_vec(&[2, 1, 1, 2], vec![0.5, 0.5, 1.0, 0.0]).unwrap();
        let t = Tensor::from_vec(&[2, 1, 1, 2], vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(batch_jaccard_loss(&p, &t).unwrap(), 0.25);
        let g = batch_jaccard_loss_grad(&p, &t).unwrap();
        assert_eq!(&g.data()[..2], &[-0.5, 0.25]);
    }

    #[test]
    fn binarize_ties_and_endpoints() {
        assert_eq!(binarize(&v(&[0.5, 0.4999, 0.0, 1.0]), THRESHOLD).data(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn confusion_fixtures() {
        let c = confusion(&v(&[1.0, 1.0, 0.0, 0.0]), &v(&[1.0, 0.0, 1.0, 0.0])).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 1, fp: 1, fn_: 1, tn: 1 });
        let m = v(&[1.0, 0.0, 1.0]);
        let c = confusion(&m, &m).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));
        let c = confusion(&v(&[0.0; 5]), &v(&[1.0; 5])).unwrap();
        assert_eq!(c.fn_, 5);
        assert!(confusion(&v(&[0.0; 2]), &v(&[1.0; 3])).is_err());
    }

    #[test]
    fn metric_fixtures() {
        let c = ConfusionCounts { tp: 1, fp: 1, fn_: 1, tn: 0 };
        assert_eq!(jaccard_index(&c), 1.0 / 3.0);
        assert_eq!(dice(&c), 0.5);
        assert_eq!(dice_from_jaccard(1.0 / 3.0), 0.5);
        let empty = ConfusionCounts::default();
        assert_eq!((jaccard_index(&empty), dice(&empty)), (1.0, 1.0));
        assert_eq!(format_scores(0.55, dice_from_jaccard(0.55)), "0.55 (0.71)");
    }

    #[test]
    fn evaluate_fixtures() {
        let t = v(&[1.0, 0.0, 1.0, 0.0]);
        let r = evaluate(std::slice::from_ref(&t), std::slice::from_ref(&t)).unwrap();
        assert_eq!(
            (r.mean_jaccard, r.mean_dice, r.agg_jaccard, r.agg_dice),
            (1.0, 1.0, 1.0, 1.0)
        );
        assert_eq!(r.summary(), "1.00 (1.00)");

        // Image 0 scores J = 1/3, image 1 is perfect.
        let p0 = v(&[0.9, 0.9, 0.1, 0.1]);
        let t0 = v(&[1.0, 0.0, 1.0, 0.0]);
        let p1 = v(&[0.9, 0.9, 0.9, 0.1]);
        let t1 = v(&[1.0, 1.0, 1.0, 0.0]);
        let r = evaluate(&[p0, p1], &[t0, t1]).unwrap();
        assert!((r.mean_jaccard - 2.0 / 3.0).abs() < 1e-15);
        // Summed counts: tp = 4, fp = 1, fn = 1.
        assert_eq!(r.agg_jaccard, 4.0 / 6.0);
        assert_eq!(r.totals, ConfusionCounts { tp: 4, fp: 1, fn_: 1, tn: 2 });

        assert!(evaluate(&[v(&[1.0])], &[]).is_err());
    }

    #[test]
    fn report_format() {
        let t = v(&[1.0, 0.0]);
        let r = evaluate_named(&["a".into(), "b".into()], &[t.clone(), t.clone()], &[t.clone(), t]).unwrap();
        let tsv = r.to_tsv();
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines[0], "id\tjaccard\tdice");
        assert_eq!(lines.len() - 1, 2 + 2);
        assert_eq!(lines[1], "a\t1.000000\t1.000000");
        assert!(lines[3].starts_with("MEAN\t"));
        assert!(lines[4].starts_with("AGGREGATE\t"));
    }

    fn random_pair(seed: u64, n: usize) -> (Tensor, Tensor) {
        let mut rng = Rng::new(seed);
        let p: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
        let t: Vec<f64> = (0..n).map(|_| if rng.uniform() < 0.4 { 1.0 } else { 0.0 }).collect();
        (v(&p), v(&t))
    }

    proptest! {
        #[test]
        fn loss_in_unit_interval(seed in 0u64..10_000, n in 1usize..50) {
            let (p, t) = random_pair(seed, n);
            let l = jaccard_loss(&p, &t).unwrap();
            prop_assert!((0.0..=1.0).contains(&l));
        }

        #[test]
        fn binarize_idempotent(seed in 0u64..10_000) {
            let (p, _) = random_pair(seed, 20);
            let b = binarize(&p, THRESHOLD);
            prop_assert_eq!(binarize(&b, THRESHOLD), b);
        }

        #[test]
        fn aggregate_dice_identity(seed in 0u64..10_000) {
            let mut rng = Rng::new(seed);
            let images = 1 + rng.below(5);
            let (mut ps, mut ts) = (Vec::new(), Vec::new());
            for i in 0..images {
                let (p, t) = random_pair(seed * 31 + i as u64, 16);
                ps.push(p);
                ts.push(t);
            }
            let r = evaluate(&ps, &ts).unwrap();
            prop_assert!((r.agg_dice - dice_from_jaccard(r.agg_jaccard)).abs() <= 1e-15);
        }
    }
}
