use crate::dynamics::{euclidean, State};
use crate::error::{Error, Result};

/// `sup_{a in A} inf_{b in B} |a - b|`. Not symmetric.
pub fn hausdorff_semidistance(a: &[State], b: &[State]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("Hausdorff semi-distance needs nonempty sets"));
    }
    let mut sup = 0.0f64;
    for p in a {
        let inf = b.iter().map(|q| euclidean(p.as_slice(), q.as_slice())).fold(f64::INFINITY, f64::min);
        sup = sup.max(inf);
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[f64]) -> Vec<State> {
        v.iter().map(|&x| State::from(vec![x])).collect()
    }

    #[test]
    fn asymmetric() {
        let a = pts(&[0.0]);
        let b = pts(&[0.0, 1.0]);
        assert_eq!(hausdorff_semidistance(&a, &b).unwrap(), 0.0);
        assert_eq!(hausdorff_semidistance(&b, &a).unwrap(), 1.0);
        assert_eq!(hausdorff_semidistance(&b, &b).unwrap(), 0.0);
    }

    #[test]
    fn empty_rejected() {
        assert!(hausdorff_semidistance(&[], &pts(&[1.0])).is_err());
        assert!(hausdorff_semidistance(&pts(&[1.0]), &[]).is_err());
    }
}
