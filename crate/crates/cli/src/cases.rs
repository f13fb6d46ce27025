//! The four benchmark cases: composite advection, Burgers sine, Sod, and
//! Shu-Osher.

use anyhow::{bail, Result};
use dgvisc::datagen;
use dgvisc::equations::EquationSpec;
use dgvisc::mesh::Boundary;

pub struct Case {
    pub name: &'static str,
    pub eq: EquationSpec,
    pub x_min: f64,
    pub x_max: f64,
    pub t_final: f64,
    pub periodic: bool,
    ic: fn(f64) -> Vec<f64>,
}

fn composite(x: f64) -> Vec<f64> {
    vec![datagen::composite_advection_ic(x)]
}

fn burgers_sine(x: f64) -> Vec<f64> {
    vec![datagen::burgers_sine_ic(x)]
}

fn sod(x: f64) -> Vec<f64> {
    EquationSpec::euler()
        .primitive_to_conservative(&datagen::sod_ic_primitive(x))
        .expect("sod states are physical")
}

fn shu_osher(x: f64) -> Vec<f64> {
    EquationSpec::euler()
        .primitive_to_conservative(&datagen::shu_osher_ic_primitive(x))
        .expect("shu-osher states are physical")
}

pub fn lookup(name: &str) -> Result<Case> {
    let case = match name {
        "composite" => Case {
            name: "composite",
            eq: EquationSpec::advection(),
            x_min: 0.0,
            x_max: 1.0,
            t_final: 2.0,
            periodic: true,
            ic: composite,
        },
        "burgers_sine" => Case {
            name: "burgers_sine",
            eq: EquationSpec::Burgers,
            x_min: 0.0,
            x_max: 1.0,
            t_final: 1.0,
            periodic: true,
            ic: burgers_sine,
        },
        "sod" => Case {
            name: "sod",
            eq: EquationSpec::euler(),
            x_min: 0.0,
            x_max: 1.0,
            t_final: 0.2,
            periodic: false,
            ic: sod,
        },
        "shu_osher" => Case {
            name: "shu_osher",
            eq: EquationSpec::euler(),
            x_min: -5.0,
            x_max: 5.0,
            t_final: 1.8,
            periodic: false,
            ic: shu_osher,
        },
        other => bail!("unknown case '{other}' (composite|burgers_sine|sod|shu_osher)"),
    };
    Ok(case)
}

impl Case {
    pub fn ic(&self, x: f64) -> Vec<f64> {
        (self.ic)(x)
    }

    pub fn boundary(&self) -> Boundary {
        if self.periodic {
            Boundary::Periodic
        } else {
            Boundary::Dirichlet {
                left: self.ic(self.x_min),
                right: self.ic(self.x_max),
            }
        }
    }
}
