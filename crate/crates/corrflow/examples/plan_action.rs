//! Turns a current-to-goal flow field into a pick-and-move command. The
//! strongest displacement inside the candidate region picks the grasp
//! pixel; its correspondence is backprojected through the depth map to a
//! metric displacement. Once every candidate moves less than the done
//! threshold the planner reports completion.

use ndarray::{s, Array2, Array3};

use corrflow::core::{CameraIntrinsics, FlowField, FlowResolution};
use corrflow::error::Result;
use corrflow::evaluation::{plan_action, DONE_THRESHOLD_PX};

fn main() -> Result<()> {
    let (h, w) = (48, 64);
    let depth = Array2::from_elem((h, w), 0.8);
    let k = CameraIntrinsics {
        fx: 120.0,
        fy: 120.0,
        cx: 31.5,
        cy: 23.5,
    };
    let mut region = Array2::from_elem((h, w), false);
    region.slice_mut(s![20..36, 30..50]).fill(true);

    // the object region must slide 9 px right, 3 px up
    let mut data = Array3::zeros((h, w, 2));
    data.slice_mut(s![20..36, 30..50, 0]).fill(9.0);
    data.slice_mut(s![20..36, 30..50, 1]).fill(-3.0);
    let flow = FlowField::new(data, FlowResolution::Full)?;

    let action = plan_action(&depth, &k, &flow, Some(&region), DONE_THRESHOLD_PX)?;
    println!("{}", serde_json::to_string_pretty(&action).expect("serializable"));

    let settled = FlowField::zeros(h, w, FlowResolution::Full);
    let action = plan_action(&depth, &k, &settled, Some(&region), DONE_THRESHOLD_PX)?;
    println!("{}", serde_json::to_string_pretty(&action).expect("serializable"));
    Ok(())
}
