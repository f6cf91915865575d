//! A world holding one task must move its object exactly as driving that
//! task's controllers by hand does.

use std::sync::Arc;

use fabricsim_core::grid::ModuleId;
use fabricsim_core::object::{default_spec, step_object};
use fabricsim_core::passing::plan_transfer;
use fabricsim_core::position::position_control_tick;
use fabricsim_core::rng::{stream, StreamKind};
use fabricsim_core::{
    ActuatorGrid, ControllerParams, DynamicsParams, ObjectState, PassingParams, Phase, Shape,
    SurfaceField, TiltController, Vec2, World, WorldConfig,
};

const DT: f64 = 1e-3;
const STEPS_PER_TICK: u64 = 50;
const STEPS_PER_SAMPLE: u64 = 5;

fn bits(s: &ObjectState) -> [u64; 4] {
    [
        s.position.x.to_bits(),
        s.position.y.to_bits(),
        s.velocity.x.to_bits(),
        s.velocity.y.to_bits(),
    ]
}

struct Oracle {
    field: SurfaceField,
    object: ObjectState,
    commands: Vec<f64>,
    dither: f64,
    seen: Vec2,
    wander: fabricsim_core::rng::SimRng,
    dynamics: DynamicsParams,
}

impl Oracle {
    fn new(grid: Arc<ActuatorGrid>, shape: Shape, start: Vec2, seed: u64) -> Self {
        Self {
            field: SurfaceField::new(grid.clone(), 0.05),
            commands: vec![0.0; grid.actuator_count()],
            object: ObjectState::at_rest(default_spec(shape), start),
            dither: 0.0,
            seen: start,
            wander: stream(seed, StreamKind::Wander, 0),
            dynamics: DynamicsParams::default(),
        }
    }

    fn set(&mut self, cmds: &[(fabricsim_core::ActuatorId, f64)]) {
        self.commands.iter_mut().for_each(|c| *c = 0.0);
        for &(a, c) in cmds {
            self.commands[a.0] = c;
        }
    }

    fn integrate(&mut self) {
        self.field.apply_commands(&self.commands, DT, 0.2);
        self.object = step_object(
            &self.object,
            &self.field,
            self.dither,
            DT,
            &self.dynamics,
            &mut self.wander,
        );
    }
}

fn world(grid: &Arc<ActuatorGrid>, shape: Shape, start: Vec2, target: Vec2, seed: u64) -> World {
    let mut w = World::new(
        SurfaceField::new(grid.clone(), 0.05),
        WorldConfig::default(),
        DynamicsParams::default(),
        ControllerParams::default(),
        PassingParams::default(),
        seed,
    )
    .unwrap();
    w.add_object(default_spec(shape), start).unwrap();
    w.submit_task(0, target).unwrap();
    w
}

#[test]
fn positioning_matches_direct_control() {
    let grid = Arc::new(ActuatorGrid::new(1, 1, 0.5, 1.5).unwrap());
    for (shape, seed) in [(Shape::Sphere, 1), (Shape::Apple, 2), (Shape::Cube, 3)] {
        let (start, target) = (Vec2::new(0.1, 0.15), Vec2::new(0.38, 0.33));
        let mut w = world(&grid, shape, start, target, seed);
        let mut o = Oracle::new(grid.clone(), shape, start, seed);
        let mut ctrl = TiltController::new(&ControllerParams::default(), &grid);
        let mut dither_rng = stream(seed, StreamKind::Dither, 0);
        for step in 0..20_000u64 {
            if step % STEPS_PER_SAMPLE == 0 {
                o.seen = o.object.position;
            }
            if step % STEPS_PER_TICK == 0 {
                let cmds = position_control_tick(&mut ctrl, &grid, o.seen, target, &mut dither_rng)
                    .unwrap();
                o.set(&cmds);
                o.dither = ctrl.dither_amp;
            }
            o.integrate();
            w.advance().unwrap();
            assert_eq!(
                bits(&w.objects()[0]),
                bits(&o.object),
                "{shape:?} diverged at step {step}"
            );
        }
    }
}

#[test]
fn transfer_then_positioning_matches_direct_control() {
    let grid = Arc::new(ActuatorGrid::new(2, 2, 0.5, 1.5).unwrap());
    let (start, target) = (grid.module_center(ModuleId(0)), Vec2::new(0.3, 0.8));
    let seed = 4;
    let mut w = world(&grid, Shape::Sphere, start, target, seed);
    let mut o = Oracle::new(grid.clone(), Shape::Sphere, start, seed);
    let mut transfer = plan_transfer(&grid, 0, start, target, PassingParams::default()).unwrap();
    let mut ctrl: Option<TiltController> = None;
    let mut dither_rng = stream(seed, StreamKind::Dither, 0);
    for step in 0..30_000u64 {
        if step % STEPS_PER_SAMPLE == 0 {
            o.seen = o.object.position;
        }
        if step % STEPS_PER_TICK == 0 {
            if ctrl.is_none() && transfer.phase == Phase::Done {
                assert_eq!(grid.detect_module(o.seen).unwrap(), ModuleId(2));
                ctrl = Some(TiltController::new(&ControllerParams::default(), &grid));
            }
            let cmds = match ctrl.as_mut() {
                Some(c) => {
                    o.dither = c.dither_amp;
                    position_control_tick(c, &grid, o.seen, target, &mut dither_rng).unwrap()
                }
                None => transfer.tick(&grid, o.seen, 0.05).0,
            };
            o.set(&cmds);
        }
        o.integrate();
        w.advance().unwrap();
        assert_eq!(
            bits(&w.objects()[0]),
            bits(&o.object),
            "diverged at step {step}"
        );
    }
    assert!(ctrl.is_some(), "transfer never finished");
    assert!(o.object.position.distance(target) <= 0.03);
}
