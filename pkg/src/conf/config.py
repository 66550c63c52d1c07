from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    rank_tol: float = 1e-10
    jump_tol: float = 1e-11
    trace_tol: float = 1e-12
    rm_tol: float = 1e-11
    constraint_tol: float = 1e-10
    cond_max: float = 1e8
    degeneracy_tol: float = 1e-12
    quad_extra: int = 4
    output_dir: str = 'results'
    log_level: str = 'INFO'
    log_format: str = '%(asctime)s %(levelname)s %(name)s: %(message)s'
    random_seed: int = 20240601
    element_cache: bool = True

    class Config:
        env_file = ".env"
        env_file_encoding = "utf-8"
        env_prefix = "ALFELD_"
        extra = "ignore"


settings = Settings()
