use defgrasp::contact::{target_force, ContactParams, ContactWorld, GripperState, PadGeometry, PlaneMotion, ForceFilter, ForceController};
use defgrasp::fem::solver::{gravity_forces, Boundary, ImplicitSolver, StepSettings};
use defgrasp::fem::{ElasticParams, SimState};
use defgrasp::mesh::primitives::box_grid;
use defgrasp::{UnitQuat, Vec3};

fn main() {
    let edge = 0.04;
    let mut mesh = box_grid(edge, edge, edge, 3, 3, 3, 1000.0).unwrap();
    for p in &mut mesh.nodes { p.x -= edge/2.0; p.y -= edge/2.0; }
    let e_mod: f64 = std::env::var("EMOD").map(|v| v.parse().unwrap()).unwrap_or(2e6);
    let params = ElasticParams::new(e_mod, 0.3, 1000.0).unwrap();
    let settings = StepSettings::default();
    let mut solver = ImplicitSolver::new(&mesh, params, settings);
    let mut state = SimState::rest(&mesh);
    let contact = ContactParams::for_mesh(&mesh, e_mod, 0.7, settings.dt);
    println!("k_n = {:.3e}, c_t = {:.3e}, margin = {}", contact.normal_stiffness, contact.friction, contact.margin);
    let gripper = GripperState::new(Vec3::new(0.0, 0.0, 0.02), UnitQuat::identity(), 0.05, PadGeometry::default());
    let mut world = ContactWorld::new(gripper, mesh.surface_nodes(), contact, Some(PlaneMotion::fixed(0.0)));
    let f_ext = gravity_forces(&mesh.node_masses, Vec3::new(0.0, 0.0, -9.81));
    let fp = target_force(mesh.total_mass, 0.7, 9.81);
    println!("mass = {}, F_p = {}", mesh.total_mass, fp);
    let mut filters = [ForceFilter::new(0.05), ForceFilter::new(0.05)];
    let mut controller = ForceController::new(2.0, 60.0, (10.0*fp).max(5.0));
    let mut first_contact = false;
    let boundary = Boundary::free();
    let dt = settings.dt;
    for step in 0..3000 {
        let raw = [world.finger_normal_force(0), world.finger_normal_force(1)];
        let filtered = [filters[0].update(raw[0]), filters[1].update(raw[1])];
        if !first_contact && (raw[0] > 0.0 || raw[1] > 0.0) { first_contact = true; }
        let drive = if !first_contact { 100.0 * 0.03 } else { controller.update(0.5*(filtered[0]+filtered[1]), fp, dt) };
        world.gripper.drive_force = [drive; 2];
        match solver.step(&mut state, &f_ext, &boundary, &mut world) {
            Ok(rep) => {
                if step % 100 == 0 || rep.newton_iters > 5 {
                    println!("step {step}: iters={} resid={:.2e} drive={drive:.3} raw=({:.3},{:.3}) sep={:.5} nc=({},{})",
                        rep.newton_iters, rep.residual, raw[0], raw[1], world.separation(),
                        world.finger_contact_count(0), world.finger_contact_count(1));
                }
            }
            Err(e) => {
                println!("step {step} FAILED: {e}");
                println!("  drive={drive} raw={raw:?} sep={:.6}", world.separation());
                break;
            }
        }
    }
}
