pub mod dense_ekf;
