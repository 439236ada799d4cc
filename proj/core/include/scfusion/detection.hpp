#pragma once

namespace scf {

// One decoded object hypothesis on the ground plane.
struct Detection {
  int frame = 0;
  double x = 0.0;  // meters, world frame
  double y = 0.0;
  double score = 0.0;  // probability in (0,1]
};

}  // namespace scf
