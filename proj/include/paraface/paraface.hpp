/*
 * paraface - parametric face reconstruction pipeline in modern C++.
 *
 * File: include/paraface/paraface.hpp
 *
 * Copyright 2026 The paraface authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include "paraface/adapt.hpp"
#include "paraface/common.hpp"
#include "paraface/config.hpp"
#include "paraface/dataset.hpp"
#include "paraface/digest.hpp"
#include "paraface/encoding.hpp"
#include "paraface/ensemble.hpp"
#include "paraface/eval.hpp"
#include "paraface/image.hpp"
#include "paraface/losses.hpp"
#include "paraface/nn.hpp"
#include "paraface/recipe.hpp"
#include "paraface/render.hpp"
#include "paraface/rng.hpp"
#include "paraface/schema.hpp"
#include "paraface/trainer.hpp"
