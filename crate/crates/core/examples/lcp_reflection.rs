//! One reflection step as a linear complementarity problem, solved by
//! enumeration, by the cached reflection map and by Lemke's method.

use srbm::lcp::{lcp_solve, lemke, LcpProblem, ReflectionMap};
use srbm::linalg::SquareMatrix;

fn main() -> srbm::Result<()> {
    let m = SquareMatrix::from_rows(&[[1.0, -0.5, 0.0], [-0.3, 1.0, -0.2], [0.0, -0.4, 1.0]])?;
    let q = vec![-0.7, 0.2, -0.1];
    let p = LcpProblem { m: m.clone(), q: q.clone() };

    let sol = lcp_solve(&p)?;
    println!("enumeration z={:?} y={:?} residual={:.1e}", sol.z, sol.y, sol.residual(&p));

    let map = ReflectionMap::new(m.clone())?;
    let (mut z, mut y) = (vec![0.0; 3], vec![0.0; 3]);
    map.reflect(&q, &mut z, &mut y)?;
    println!("cached map  z={z:?} y={y:?}");

    let lk = lemke(&m, &q)?;
    println!("lemke       z={:?} y={:?}", lk.z, lk.y);
    Ok(())
}
