#pragma once

#include "partstyle/camera.hpp"
#include "partstyle/checkpoint.hpp"
#include "partstyle/config.hpp"
#include "partstyle/embedding.hpp"
#include "partstyle/finetune.hpp"
#include "partstyle/grounding.hpp"
#include "partstyle/image.hpp"
#include "partstyle/losses.hpp"
#include "partstyle/mesh.hpp"
#include "partstyle/metrics.hpp"
#include "partstyle/optimizer.hpp"
#include "partstyle/oracle_backend.hpp"
#include "partstyle/prompt.hpp"
#include "partstyle/render.hpp"
#include "partstyle/rng.hpp"
#include "partstyle/study.hpp"
#include "partstyle/style_field.hpp"
#include "partstyle/toy_backend.hpp"
#include "partstyle/trainer.hpp"
