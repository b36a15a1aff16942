#pragma once

namespace prodehaze::pipeline {

// Configures the default stderr logger from PRODEHAZE_LOG (error|info|debug,
// default info). Throws kConfig for any other value.
void init_logging();

}  // namespace prodehaze::pipeline
