// Copyright 2026 The gasso Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Umbrella header for the numerical library. gasso/io.hpp is separate
// because it pulls in nlohmann/json.

#pragma once

#include "gasso/association.hpp"
#include "gasso/common.hpp"
#include "gasso/expfam.hpp"
#include "gasso/fitter.hpp"
#include "gasso/model.hpp"
#include "gasso/numkit.hpp"
#include "gasso/predictor.hpp"
#include "gasso/rankselect.hpp"
#include "gasso/simgen.hpp"
