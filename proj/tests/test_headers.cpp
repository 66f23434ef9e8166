#include "offrl/dataset_io.hpp"
#include "offrl/discretize.hpp"
#include "offrl/empirical_mdp.hpp"
#include "offrl/optics.hpp"
#include "offrl/pca.hpp"
#include "offrl/synthetic.hpp"
#include "offrl/trainer.hpp"

#include <gtest/gtest.h>

TEST(Headers, Compile) { SUCCEED(); }
