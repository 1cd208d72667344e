use defgrasp::fem::solver::{ImplicitSolver, StepSettings};
use defgrasp::fem::ElasticParams;
use defgrasp::mesh::primitives::box_grid;
use defgrasp::Vec3;

fn main() {
    let (lx, t) = (0.1, 0.01);
    for (nx, ns) in [(64usize, 8usize), (70, 9)] {
        let start = std::time::Instant::now();
        let mesh = box_grid(lx, t, t, nx, ns, ns, 1000.0).unwrap();
        let e_mod = 2e6;
        let params = ElasticParams::new(e_mod, 0.3, 1000.0).unwrap();
        let mut solver = ImplicitSolver::new(&mesh, params, StepSettings::default());
        let fixed: Vec<usize> = (0..mesh.n_nodes()).filter(|&i| mesh.nodes[i].x < 1e-12).collect();
        let tip: Vec<usize> = (0..mesh.n_nodes()).filter(|&i| (mesh.nodes[i].x - lx).abs() < 1e-12).collect();
        let p_total = 5e-3;
        let mut f_ext = vec![Vec3::zeros(); mesh.n_nodes()];
        for &i in &tip { f_ext[i] = Vec3::new(0.0, 0.0, -p_total / tip.len() as f64); }
        let mut x = mesh.nodes.clone();
        solver.solve_static(&mut x, &f_ext, &fixed, 2).unwrap();
        let tip_defl: f64 = tip.iter().map(|&i| (x[i].z - mesh.nodes[i].z).abs()).sum::<f64>() / tip.len() as f64;
        let inertia = t.powi(4) / 12.0;
        let analytic = p_total * lx.powi(3) / (3.0 * e_mod * inertia);
        println!("nx={nx} ns={ns} tets={} dofs={} defl={tip_defl:.4e} rel={:.4} time={:.1?}",
            mesh.n_tets(), mesh.n_nodes()*3, (tip_defl - analytic).abs()/analytic, start.elapsed());
    }
}
