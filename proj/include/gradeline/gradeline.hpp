#pragma once

#include "gradeline/augmentation.hpp"
#include "gradeline/classifiers/dataset.hpp"
#include "gradeline/classifiers/forest.hpp"
#include "gradeline/classifiers/knn.hpp"
#include "gradeline/classifiers/model.hpp"
#include "gradeline/classifiers/naive_bayes.hpp"
#include "gradeline/classifiers/svm.hpp"
#include "gradeline/detection.hpp"
#include "gradeline/error.hpp"
#include "gradeline/evaluation.hpp"
#include "gradeline/features.hpp"
#include "gradeline/image_io.hpp"
#include "gradeline/imaging.hpp"
#include "gradeline/mask.hpp"
#include "gradeline/pipeline.hpp"
#include "gradeline/regions.hpp"
#include "gradeline/segmentation.hpp"
#include "gradeline/services/base64.hpp"
#include "gradeline/services/cloud.hpp"
#include "gradeline/services/edge.hpp"
#include "gradeline/services/simulator.hpp"
#include "gradeline/services/tcp.hpp"
#include "gradeline/services/wire.hpp"
#include "gradeline/synthetic.hpp"
