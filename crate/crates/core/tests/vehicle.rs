use approx::assert_relative_eq;
use bldc_sim::vehicle::{
    force_breakdown, load_torque, motor_speed_from_vehicle, shaft_torque_from_force, total_force,
    vehicle_speed_from_motor, RoadState, VehicleParams,
};

fn zeroed() -> VehicleParams {
    VehicleParams {
        mass: 0.0,
        gravity: 9.81,
        rolling_coeff: 0.0,
        air_density: 0.0,
        drag_coeff: 0.0,
        frontal_area: 0.0,
        wheel_radius: 0.3,
        gear_ratio: 1.0,
        driveline_efficiency: 1.0,
    }
}

#[test]
fn rolling_resistance_of_a_tonne() {
    let p = VehicleParams {
        mass: 1000.0,
        rolling_coeff: 0.015,
        ..zeroed()
    };
    let f = force_breakdown(&p, RoadState { slope: 0.0, speed: 5.0 }, 0.0);
    assert_relative_eq!(f.rolling, 147.15, epsilon = 1e-9);
    assert_eq!(f.aero, 0.0);
    assert_eq!(f.grade, 0.0);
}

#[test]
fn nothing_acts_at_rest_on_flat_road() {
    let p = VehicleParams::default();
    assert_eq!(total_force(&p, RoadState::default(), 0.0), 0.0);
    assert_eq!(load_torque(&p, RoadState::default(), 0.0), 0.0);
}

#[test]
fn aerodynamic_drag_at_twenty_mps() {
    let p = VehicleParams {
        air_density: 1.2,
        drag_coeff: 0.3,
        frontal_area: 2.0,
        ..zeroed()
    };
    let f = force_breakdown(&p, RoadState { slope: 0.0, speed: 20.0 }, 0.0);
    assert_relative_eq!(f.aero, 144.0, epsilon = 1e-9);
    assert_relative_eq!(f.total(), 144.0, epsilon = 1e-9);
}

#[test]
fn shaft_torque_examples() {
    let direct = zeroed();
    assert_relative_eq!(shaft_torque_from_force(&direct, 500.0), 150.0, epsilon = 1e-12);
    assert_eq!(shaft_torque_from_force(&direct, 0.0), 0.0);
    let geared = VehicleParams {
        gear_ratio: 5.0,
        driveline_efficiency: 0.95,
        ..zeroed()
    };
    assert_relative_eq!(shaft_torque_from_force(&geared, 500.0), 31.5789, epsilon = 1e-4);
}

#[test]
fn regenerative_force_is_reduced_by_the_driveline() {
    let p = VehicleParams {
        gear_ratio: 5.0,
        driveline_efficiency: 0.95,
        ..zeroed()
    };
    assert_relative_eq!(shaft_torque_from_force(&p, -500.0), -500.0 * 0.3 / 5.0 * 0.95, epsilon = 1e-12);
}

#[test]
fn grade_force_matches_weight_component() {
    let p = VehicleParams {
        mass: 500.0,
        ..zeroed()
    };
    let slope = 0.05f64;
    let f = force_breakdown(&p, RoadState { slope, speed: 0.0 }, 0.0);
    assert_relative_eq!(f.grade, 500.0 * 9.81 * slope.sin(), epsilon = 1e-9);
}

#[test]
fn motor_speed_examples() {
    assert_eq!(motor_speed_from_vehicle(&zeroed(), 0.0), 0.0);
    assert_relative_eq!(motor_speed_from_vehicle(&zeroed(), 10.0), 33.333, epsilon = 1e-3);
    let p = VehicleParams {
        wheel_radius: 0.25,
        gear_ratio: 4.0,
        ..zeroed()
    };
    assert_relative_eq!(motor_speed_from_vehicle(&p, 15.0), 240.0, epsilon = 1e-9);
    assert_relative_eq!(vehicle_speed_from_motor(&p, 240.0), 15.0, epsilon = 1e-12);
}
