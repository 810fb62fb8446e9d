#include "vis/types.hpp"

namespace vis {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::InvalidStep: return "InvalidStep";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::NotNormal: return "NotNormal";
    case ErrorCode::NotCoercive: return "NotCoercive";
    case ErrorCode::InvalidInstance: return "InvalidInstance";
    case ErrorCode::OutsideEnlargement: return "OutsideEnlargement";
    case ErrorCode::SetValued: return "SetValued";
    case ErrorCode::NewtonDiverged: return "NewtonDiverged";
    case ErrorCode::SwitchCollision: return "SwitchCollision";
    case ErrorCode::DegenerateSlope: return "DegenerateSlope";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace vis
