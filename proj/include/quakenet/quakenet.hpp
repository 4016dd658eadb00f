/* Copyright 2026 The quakenet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef QUAKENET_QUAKENET_HPP_
#define QUAKENET_QUAKENET_HPP_

#include "quakenet/dataset.hpp"
#include "quakenet/gemm.hpp"
#include "quakenet/image.hpp"
#include "quakenet/layers.hpp"
#include "quakenet/model.hpp"
#include "quakenet/optim.hpp"
#include "quakenet/random.hpp"
#include "quakenet/synthetic.hpp"
#include "quakenet/tensor.hpp"
#include "quakenet/train.hpp"
#include "quakenet/weights_io.hpp"

#endif  // QUAKENET_QUAKENET_HPP_
